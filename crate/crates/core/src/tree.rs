//! Marked Galton–Watson trees stored in an arena.
//!
//! Each vertex draws its offspring from a generator keyed by its Ulam–Harris
//! address (derived from the tree seed), so a tree is a deterministic function
//! of its seed no matter in which order vertices get expanded. Trees can be
//! grown eagerly, generation by generation, or lazily while a walk explores
//! them. Node ids follow creation order: parents precede children, siblings
//! are contiguous, and an eagerly generated tree is numbered generation by
//! generation.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::rng::{mix64, vertex_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const NONE: u32 = u32::MAX;
const UNEXPANDED: u32 = u32::MAX;

/// Default cap on the number of stored vertices.
pub const DEFAULT_NODE_CAP: usize = 50_000_000;

#[derive(Debug, Clone)]
struct Node {
    parent: u32,
    first_child: u32,
    n_children: u32,
    generation: u32,
    displacement: f64,
    potential: f64,
    /// e^{−A_x}, the edge weight seen from the parent.
    weight: f64,
    /// Σ_i e^{−A_{x_i}} over the children.
    child_weight: f64,
    /// log H_x.
    log_h: f64,
    key: u64,
}

/// Result of [`MarkedTree::ancestor_at`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ancestor {
    Vertex(NodeId),
    /// The slot-tagged virtual leaf standing in for an ancestor that does not exist.
    Virtual(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeOptions {
    /// Vertices at this generation cannot be expanded.
    pub depth_limit: u32,
    pub node_cap: usize,
    /// For laws with extinction: generation the tree must reach to be accepted.
    pub survival_depth: u32,
    pub max_rejections: u32,
}

impl TreeOptions {
    pub fn with_depth(depth_limit: u32) -> Self {
        TreeOptions { depth_limit, node_cap: DEFAULT_NODE_CAP, survival_depth: depth_limit.min(30), max_rejections: 10_000 }
    }
}

#[derive(Debug, Clone)]
pub struct MarkedTree {
    law: Option<Arc<EnvironmentLaw>>,
    seed: u64,
    nodes: Vec<Node>,
    levels: Vec<Vec<NodeId>>,
    depth_limit: u32,
    node_cap: usize,
    /// Every vertex of generation < this value is expanded.
    complete_below: u32,
    rejections: u32,
}

fn child_key(parent_key: u64, index: usize) -> u64 {
    mix64(parent_key.rotate_left(23) ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl MarkedTree {
    fn empty(law: Option<Arc<EnvironmentLaw>>, seed: u64, depth_limit: u32, node_cap: usize) -> Self {
        let root = Node {
            parent: NONE,
            first_child: NONE,
            n_children: UNEXPANDED,
            generation: 0,
            displacement: 0.0,
            potential: 0.0,
            weight: 1.0,
            child_weight: 0.0,
            log_h: 0.0,
            key: mix64(seed),
        };
        MarkedTree {
            law,
            seed,
            nodes: vec![root],
            levels: vec![vec![NodeId::ROOT]],
            depth_limit,
            node_cap,
            complete_below: 0,
            rejections: 0,
        }
    }

    /// A tree that grows on demand. Only the root exists initially (plus
    /// whatever the survival check expands for laws with extinction).
    pub fn lazy(law: Arc<EnvironmentLaw>, seed: u64, opts: TreeOptions) -> Result<Self> {
        if !law.extinction_possible() {
            return Ok(Self::empty(Some(law), seed, opts.depth_limit, opts.node_cap));
        }
        let target = opts.survival_depth.min(opts.depth_limit);
        for attempt in 0..=opts.max_rejections {
            let s = if attempt == 0 { seed } else { mix64(seed ^ u64::from(attempt)) };
            let mut tree = Self::empty(Some(law.clone()), s, opts.depth_limit, opts.node_cap);
            if tree.survives_to(target)? {
                tree.rejections = attempt;
                return Ok(tree);
            }
        }
        Err(Error::EmptySupport(format!("no surviving tree after {} attempts", opts.max_rejections)))
    }

    /// A tree expanded through generation `depth − 1`, so generation `depth`
    /// is complete and forms the truncation frontier.
    pub fn generate(law: Arc<EnvironmentLaw>, depth: u32, seed: u64) -> Result<Self> {
        Self::generate_with(law, depth, seed, DEFAULT_NODE_CAP, 10_000)
    }

    pub fn generate_with(
        law: Arc<EnvironmentLaw>,
        depth: u32,
        seed: u64,
        node_cap: usize,
        max_rejections: u32,
    ) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        let m = law.mean_offspring();
        let expected: f64 = (0..=depth).map(|g| m.powi(g as i32)).sum();
        if expected > node_cap as f64 {
            return Err(Error::ResourceCap { cap: node_cap, depth });
        }
        for attempt in 0..=max_rejections {
            let s = if attempt == 0 { seed } else { mix64(seed ^ u64::from(attempt)) };
            let mut tree = Self::empty(Some(law.clone()), s, depth, node_cap);
            tree.expand_to(depth)?;
            if !tree.level(depth).is_empty() {
                tree.rejections = attempt;
                return Ok(tree);
            }
        }
        Err(Error::EmptySupport(format!("no tree survived to generation {depth}")))
    }

    fn survives_to(&mut self, target: u32) -> Result<bool> {
        let mut stack = vec![NodeId::ROOT];
        while let Some(x) = stack.pop() {
            if self.generation(x) >= target {
                return Ok(true);
            }
            self.expand(x)?;
            stack.extend(self.children(x).rev());
        }
        Ok(false)
    }

    pub fn law(&self) -> Option<&EnvironmentLaw> {
        self.law.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of rejected (extinct) trees before this one was accepted.
    pub fn rejections(&self) -> u32 {
        self.rejections
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth_limit(&self) -> u32 {
        self.depth_limit
    }

    pub fn set_depth_limit(&mut self, depth_limit: u32) {
        self.depth_limit = depth_limit;
    }

    /// Highest generation with at least one stored vertex.
    pub fn max_generation(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    #[inline]
    fn node(&self, x: NodeId) -> &Node {
        &self.nodes[x.index()]
    }

    pub fn contains(&self, x: NodeId) -> bool {
        x.index() < self.nodes.len()
    }

    #[inline]
    pub fn parent(&self, x: NodeId) -> Option<NodeId> {
        let p = self.node(x).parent;
        (p != NONE).then_some(NodeId(p))
    }

    #[inline]
    pub fn generation(&self, x: NodeId) -> u32 {
        self.node(x).generation
    }

    #[inline]
    pub fn potential(&self, x: NodeId) -> f64 {
        self.node(x).potential
    }

    #[inline]
    pub fn displacement(&self, x: NodeId) -> f64 {
        self.node(x).displacement
    }

    /// e^{−A_x}.
    #[inline]
    pub fn edge_weight(&self, x: NodeId) -> f64 {
        self.node(x).weight
    }

    /// Σ over children of e^{−A}; 0 for leaves and unexpanded vertices.
    #[inline]
    pub fn child_weight(&self, x: NodeId) -> f64 {
        self.node(x).child_weight
    }

    pub fn key(&self, x: NodeId) -> u64 {
        self.node(x).key
    }

    #[inline]
    pub fn is_expanded(&self, x: NodeId) -> bool {
        self.node(x).n_children != UNEXPANDED
    }

    /// Children of `x`; empty when `x` is a leaf or not yet expanded.
    #[inline]
    pub fn children(&self, x: NodeId) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        let n = self.node(x);
        let count = if n.n_children == UNEXPANDED { 0 } else { n.n_children };
        (n.first_child..n.first_child.wrapping_add(count)).map(NodeId)
    }

    pub fn child_count(&self, x: NodeId) -> Option<u32> {
        let n = self.node(x).n_children;
        (n != UNEXPANDED).then_some(n)
    }

    /// Stored vertices of generation `g` (all of them once the tree is complete there).
    pub fn level(&self, g: u32) -> &[NodeId] {
        self.levels.get(g as usize).map_or(&[], Vec::as_slice)
    }

    /// Draw the children of `x` if not done yet.
    pub fn expand(&mut self, x: NodeId) -> Result<()> {
        if self.is_expanded(x) {
            return Ok(());
        }
        let node = self.node(x);
        let Some(law) = self.law.clone() else {
            // Hand-built trees: unexpanded vertices are leaves.
            self.nodes[x.index()].n_children = 0;
            self.nodes[x.index()].first_child = self.nodes.len() as u32;
            return Ok(());
        };
        if node.generation >= self.depth_limit {
            return Err(Error::DepthExceeded { vertex: x, generation: node.generation });
        }
        let mut rng = vertex_rng(node.key);
        let displacements = law.sample_offspring(&mut rng);
        self.attach(x, &displacements)
    }

    fn attach(&mut self, x: NodeId, displacements: &[f64]) -> Result<()> {
        if self.nodes.len() + displacements.len() > self.node_cap {
            return Err(Error::ResourceCap { cap: self.node_cap, depth: self.node(x).generation + 1 });
        }
        let first = self.nodes.len() as u32;
        let (gen, pot, log_h, key) = {
            let n = self.node(x);
            (n.generation + 1, n.potential, n.log_h, n.key)
        };
        let mut child_weight = 0.0;
        for (i, &a) in displacements.iter().enumerate() {
            let weight = (-a).exp();
            child_weight += weight;
            let id = NodeId(self.nodes.len() as u32);
            self.nodes.push(Node {
                parent: x.0,
                first_child: NONE,
                n_children: UNEXPANDED,
                generation: gen,
                displacement: a,
                potential: pot + a,
                weight,
                child_weight: 0.0,
                // H_y = 1 + H_x e^{−A_y}
                log_h: softplus(log_h - a),
                key: child_key(key, i),
            });
            if self.levels.len() <= gen as usize {
                self.levels.push(Vec::new());
            }
            self.levels[gen as usize].push(id);
        }
        let n = &mut self.nodes[x.index()];
        n.first_child = first;
        n.n_children = displacements.len() as u32;
        n.child_weight = child_weight;
        Ok(())
    }

    /// Expand every vertex of generation `< depth`, making generation `depth` complete.
    pub fn expand_to(&mut self, depth: u32) -> Result<()> {
        while self.complete_below < depth {
            let g = self.complete_below as usize;
            if g >= self.levels.len() {
                self.complete_below = depth;
                break;
            }
            let mut i = 0;
            while i < self.levels[g].len() {
                let x = self.levels[g][i];
                self.expand(x)?;
                i += 1;
            }
            self.complete_below += 1;
        }
        Ok(())
    }

    /// Generation `g` in full (expanding as needed).
    pub fn complete_level(&mut self, g: u32) -> Result<&[NodeId]> {
        self.expand_to(g)?;
        Ok(self.level(g))
    }

    /// Path e = w_0, …, w_{|x|} = x.
    pub fn path(&self, x: NodeId) -> Vec<NodeId> {
        let mut path = Vec::with_capacity(self.generation(x) as usize + 1);
        let mut cur = Some(x);
        while let Some(c) = cur {
            path.push(c);
            cur = self.parent(c);
        }
        path.reverse();
        path
    }

    /// Ancestor of `x` in generation `m`, or the virtual leaf of `slot` when `|x| < m`.
    pub fn ancestor_at(&self, x: NodeId, m: u32, slot: usize) -> Ancestor {
        let g = self.generation(x);
        if g < m {
            return Ancestor::Virtual(slot);
        }
        let mut cur = x;
        for _ in m..g {
            cur = NodeId(self.node(cur).parent);
        }
        Ancestor::Vertex(cur)
    }

    /// Ancestor of `x` in generation `m ≤ |x|`.
    #[inline]
    pub fn ancestor(&self, x: NodeId, m: u32) -> NodeId {
        let mut cur = x;
        let mut g = self.generation(x);
        debug_assert!(m <= g);
        while g > m {
            cur = NodeId(self.node(cur).parent);
            g -= 1;
        }
        cur
    }

    pub fn is_ancestor_or_equal(&self, u: NodeId, x: NodeId) -> bool {
        let gu = self.generation(u);
        gu <= self.generation(x) && self.ancestor(x, gu) == u
    }

    /// Most recent common ancestor (possibly the root).
    pub fn mrca(&self, x: NodeId, y: NodeId) -> NodeId {
        let (gx, gy) = (self.generation(x), self.generation(y));
        let g = gx.min(gy);
        let mut a = self.ancestor(x, g);
        let mut b = self.ancestor(y, g);
        while a != b {
            a = NodeId(self.node(a).parent);
            b = NodeId(self.node(b).parent);
        }
        a
    }

    /// W_n = Σ_{|x|=n} e^{−V(x)} (expands the tree through generation n).
    pub fn additive_martingale(&mut self, n: u32) -> Result<f64> {
        self.expand_to(n)?;
        Ok(self.level(n).iter().map(|&x| (-self.potential(x)).exp()).sum())
    }

    /// Martingale evaluated on the stopping line made of the first vertices
    /// with V > `cutoff`, or of generation `max_generation`. Subtrees beyond
    /// the line contribute e^{−V} each, their conditional mean.
    pub fn stopped_martingale(&mut self, cutoff: f64, max_generation: u32) -> Result<f64> {
        let mut total = 0.0;
        let mut stack = vec![NodeId::ROOT];
        while let Some(x) = stack.pop() {
            let v = self.potential(x);
            if v > cutoff || self.generation(x) >= max_generation {
                total += (-v).exp();
                continue;
            }
            self.expand(x)?;
            stack.extend(self.children(x).rev());
        }
        Ok(total)
    }

    /// One draw of W_{n+1} given this tree through generation n: fresh
    /// offspring for every vertex of generation n from `rng`.
    pub fn resampled_next_martingale<R: Rng + ?Sized>(&mut self, n: u32, rng: &mut R) -> Result<f64> {
        let law = self.law.clone().ok_or_else(|| Error::InvalidArgument("tree has no law".into()))?;
        self.expand_to(n)?;
        let mut total = 0.0;
        for &x in self.level(n) {
            let w: f64 = law.sample_offspring(rng).iter().map(|a| (-a).exp()).sum();
            total += (-self.potential(x)).exp() * w;
        }
        Ok(total)
    }

    /// log H_x.
    #[inline]
    pub fn log_conductance(&self, x: NodeId) -> f64 {
        self.node(x).log_h
    }

    /// H_x = Σ_{e≤w≤x} e^{V(w)−V(x)} ≥ 1.
    pub fn conductance_h(&self, x: NodeId) -> f64 {
        self.node(x).log_h.exp()
    }

    /// log Σ_{e≤w≤x} e^{V(w)}.
    #[inline]
    pub fn log_path_sum(&self, x: NodeId) -> f64 {
        self.node(x).log_h + self.node(x).potential
    }

    /// log H_{u,x} = log Σ_{u≤z≤x} e^{V(z)−V(x)}.
    pub fn log_partial_h(&self, u: NodeId, x: NodeId) -> Result<f64> {
        if !self.is_ancestor_or_equal(u, x) {
            return Err(Error::Ancestry { ancestor: u, descendant: x });
        }
        let vx = self.potential(x);
        let mut terms = Vec::new();
        let mut cur = x;
        loop {
            terms.push(self.potential(cur) - vx);
            if cur == u {
                break;
            }
            cur = NodeId(self.node(cur).parent);
        }
        Ok(crate::environment::log_sum_exp(&terms))
    }

    pub fn partial_h(&self, u: NodeId, x: NodeId) -> Result<f64> {
        self.log_partial_h(u, x).map(f64::exp)
    }

    /// Write the snapshot format: `#` header lines, then
    /// `id parent_id generation displacement potential` per vertex (root parent is −1).
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# treewalk tree snapshot v1")?;
        if let Some(law) = &self.law {
            writeln!(out, "# law {}", serde_json::to_string(&law.family).expect("law serializes"))?;
        }
        writeln!(out, "# seed {}", self.seed)?;
        writeln!(out, "# depth_limit {}", self.depth_limit)?;
        writeln!(out, "# nodes {}", self.nodes.len())?;
        for (i, n) in self.nodes.iter().enumerate() {
            let parent = if n.parent == NONE { -1 } else { i64::from(n.parent) };
            writeln!(out, "{i} {parent} {} {} {}", n.generation, n.displacement, n.potential)?;
        }
        Ok(())
    }

    pub fn to_snapshot(&self) -> String {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("snapshot is utf-8")
    }

    /// Parse a snapshot. Childless vertices are left unexpanded: with a law
    /// present they regrow exactly as in the original tree.
    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut law = None;
        let mut seed = 0u64;
        let mut depth_limit = u32::MAX;
        let mut rows: Vec<(u32, i64, u32, f64, f64)> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line_no = lineno + 1;
            let line = line.map_err(|e| Error::Snapshot { line: line_no, message: e.to_string() })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let bad = |m: String| Error::Snapshot { line: line_no, message: m };
                if let Some(v) = rest.strip_prefix("law ") {
                    let family = serde_json::from_str(v).map_err(|e| bad(e.to_string()))?;
                    law = Some(Arc::new(EnvironmentLaw::from_family(family)));
                } else if let Some(v) = rest.strip_prefix("seed ") {
                    seed = v.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
                } else if let Some(v) = rest.strip_prefix("depth_limit ") {
                    depth_limit = v.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::Snapshot { line: line_no, message: format!("expected 5 fields, got {}", f.len()) });
            }
            let parse_err = |field: &str| Error::Snapshot { line: line_no, message: format!("bad {field}") };
            rows.push((
                f[0].parse().map_err(|_| parse_err("id"))?,
                f[1].parse().map_err(|_| parse_err("parent_id"))?,
                f[2].parse().map_err(|_| parse_err("generation"))?,
                f[3].parse().map_err(|_| parse_err("displacement"))?,
                f[4].parse().map_err(|_| parse_err("potential"))?,
            ));
        }
        if rows.is_empty() || rows[0].1 != -1 || rows[0].0 != 0 {
            return Err(Error::Snapshot { line: 0, message: "first vertex must be the root with parent −1".into() });
        }
        let mut tree = Self::empty(law, seed, depth_limit, DEFAULT_NODE_CAP.max(rows.len()));
        // Group consecutive rows by parent; children of a vertex must be contiguous.
        let mut i = 1;
        while i < rows.len() {
            let parent = rows[i].1;
            let mut j = i;
            while j < rows.len() && rows[j].1 == parent {
                j += 1;
            }
            if parent < 0 || parent as usize >= tree.nodes.len() {
                return Err(Error::Snapshot { line: i, message: format!("parent {parent} not defined before child") });
            }
            let p = NodeId(parent as u32);
            if tree.is_expanded(p) {
                return Err(Error::Snapshot { line: i, message: format!("children of {p} are not contiguous") });
            }
            let disps: Vec<f64> = rows[i..j].iter().map(|r| r.3).collect();
            tree.attach(p, &disps)?;
            for (r, id) in rows[i..j].iter().zip(tree.children(p)) {
                if r.0 != id.0 || r.2 != tree.generation(id) || r.4 != tree.potential(id) {
                    return Err(Error::Snapshot { line: r.0 as usize, message: "row inconsistent with its parent".into() });
                }
            }
            i = j;
        }
        if tree.law.is_none() {
            for n in &mut tree.nodes {
                if n.n_children == UNEXPANDED {
                    n.n_children = 0;
                }
            }
        }
        Ok(tree)
    }
}

/// Hand-built trees for tests and oracles. Each vertex receives all its
/// children in a single call.
#[derive(Debug, Clone)]
pub struct TreeBuilder {
    tree: MarkedTree,
}

impl Default for TreeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder { tree: MarkedTree::empty(None, 0, u32::MAX, DEFAULT_NODE_CAP) }
    }

    /// Attach children with the given displacements; returns their ids.
    pub fn children(&mut self, parent: NodeId, displacements: &[f64]) -> Vec<NodeId> {
        assert!(!self.tree.is_expanded(parent), "children of {parent} already set");
        self.tree.attach(parent, displacements).expect("builder below node cap");
        self.tree.children(parent).collect()
    }

    /// A single line of descent e = x_0, x_1, …, with the given displacements.
    pub fn path(displacements: &[f64]) -> (MarkedTree, Vec<NodeId>) {
        let mut b = TreeBuilder::new();
        let mut ids = vec![NodeId::ROOT];
        for &a in displacements {
            let c = b.children(*ids.last().unwrap(), &[a]);
            ids.push(c[0]);
        }
        (b.build(), ids)
    }

    pub fn build(mut self) -> MarkedTree {
        for n in &mut self.tree.nodes {
            if n.n_children == UNEXPANDED {
                n.n_children = 0;
            }
        }
        self.tree.complete_below = u32::MAX;
        self.tree
    }
}

/// Pre-order intervals of the stored vertices: O(1) ancestry tests.
#[derive(Debug, Clone)]
pub struct AncestryIndex {
    enter: Vec<u32>,
    exit: Vec<u32>,
}

impl AncestryIndex {
    pub fn new(tree: &MarkedTree) -> Self {
        let n = tree.len();
        let mut enter = vec![0u32; n];
        let mut exit = vec![0u32; n];
        let mut clock = 0u32;
        let mut stack: Vec<(NodeId, bool)> = vec![(NodeId::ROOT, false)];
        while let Some((x, done)) = stack.pop() {
            if done {
                exit[x.index()] = clock;
                continue;
            }
            enter[x.index()] = clock;
            clock += 1;
            stack.push((x, true));
            for c in tree.children(x).rev() {
                stack.push((c, false));
            }
        }
        AncestryIndex { enter, exit }
    }

    #[inline]
    pub fn is_ancestor_or_equal(&self, u: NodeId, x: NodeId) -> bool {
        self.enter[u.index()] <= self.enter[x.index()] && self.exit[x.index()] <= self.exit[u.index()]
    }

    #[inline]
    pub fn related(&self, u: NodeId, x: NodeId) -> bool {
        self.is_ancestor_or_equal(u, x) || self.is_ancestor_or_equal(x, u)
    }
}

/// Visit every ordered k-tuple of distinct, pairwise non-ancestral vertices
/// drawn from `vertices` (the set Δ^k restricted to them).
pub fn for_each_delta_k<F: FnMut(&[NodeId])>(index: &AncestryIndex, vertices: &[NodeId], k: usize, mut visit: F) {
    fn rec<F: FnMut(&[NodeId])>(
        index: &AncestryIndex,
        vertices: &[NodeId],
        k: usize,
        cur: &mut Vec<NodeId>,
        visit: &mut F,
    ) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for &v in vertices {
            if cur.iter().all(|&u| !index.related(u, v)) {
                cur.push(v);
                rec(index, vertices, k, cur, visit);
                cur.pop();
            }
        }
    }
    if k == 0 {
        return;
    }
    rec(index, vertices, k, &mut Vec::with_capacity(k), &mut visit);
}

/// All tuples of [`for_each_delta_k`], collected.
pub fn enumerate_delta_k(tree: &MarkedTree, vertices: &[NodeId], k: usize) -> Vec<Vec<NodeId>> {
    let index = AncestryIndex::new(tree);
    let mut out = Vec::new();
    for_each_delta_k(&index, vertices, k, |t| out.push(t.to_vec()));
    out
}
