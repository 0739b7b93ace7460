//! The quenched biased walk reflected at e*, decomposed into excursions.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::Rng;

use crate::environment::Schedule;
use crate::error::{Error, Result};
use crate::tree::{MarkedTree, NodeId};

/// A position of the walk: the parent e* of the root, or a tree vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    Star,
    Vertex(NodeId),
}

/// One step from `site` (expanding the current vertex if needed). The flag
/// tells whether the step went from a parent to one of its children.
#[inline]
fn step<R: Rng + ?Sized>(tree: &mut MarkedTree, site: Site, rng: &mut R) -> Result<(Site, bool)> {
    let u = match site {
        Site::Star => return Ok((Site::Vertex(NodeId::ROOT), true)),
        Site::Vertex(u) => u,
    };
    if !tree.is_expanded(u) {
        tree.expand(u)?;
    }
    // p(u, u*) ∝ e^{−V(u)}, p(u, u_i) ∝ e^{−V(u_i)}; divide through by e^{−V(u)}.
    let total = 1.0 + tree.child_weight(u);
    let mut r = rng.random::<f64>() * total;
    if r < 1.0 {
        return Ok((tree.parent(u).map_or(Site::Star, Site::Vertex), false));
    }
    r -= 1.0;
    let mut last = None;
    for c in tree.children(u) {
        let w = tree.edge_weight(c);
        if r < w {
            return Ok((Site::Vertex(c), true));
        }
        r -= w;
        last = Some(c);
    }
    // Rounding left r just past the last bucket.
    Ok((last.map_or(Site::Star, Site::Vertex), last.is_some()))
}

/// Sample the quenched kernel once from `site`.
pub fn transition<R: Rng + ?Sized>(tree: &mut MarkedTree, site: Site, rng: &mut R) -> Result<Site> {
    step(tree, site, rng).map(|s| s.0)
}

/// Per-vertex excursion summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExcursionStats {
    /// E^s_u: number of excursions visiting u.
    pub count: u32,
    pub single: bool,
    /// 1-based index of the first excursion visiting u.
    pub first: u32,
}

/// Record of a walk run until its s-th return to e*.
#[derive(Debug, Clone, Default)]
pub struct WalkTrace {
    /// Completed excursions s.
    pub excursions: u32,
    /// Total number of steps (T^s for a completed run).
    pub steps: u64,
    /// T^0 = 0, T^1, …, T^s.
    pub return_times: Vec<u64>,
    /// How many times the depth limit had to be raised.
    pub depth_retries: u32,
    local_time: Vec<u32>,
    edge_local_time: Vec<u32>,
    excursion_count: Vec<u32>,
    first_excursion: Vec<u32>,
    last_excursion: Vec<u32>,
    first_hit: Vec<u64>,
    /// Excursion indices for vertices visited in two or more excursions.
    multi: HashMap<u32, Vec<u32>>,
    visited: Vec<NodeId>,
}

impl WalkTrace {
    fn grow(&mut self, len: usize) {
        if self.local_time.len() < len {
            let new_len = len.max(self.local_time.len() * 2);
            self.local_time.resize(new_len, 0);
            self.edge_local_time.resize(new_len, 0);
            self.excursion_count.resize(new_len, 0);
            self.first_excursion.resize(new_len, 0);
            self.last_excursion.resize(new_len, 0);
            self.first_hit.resize(new_len, u64::MAX);
        }
    }

    #[inline]
    fn record(&mut self, u: NodeId, down: bool, excursion: u32, time: u64) {
        let i = u.index();
        self.local_time[i] += 1;
        if !down {
            return;
        }
        self.edge_local_time[i] += 1;
        if self.last_excursion[i] == excursion {
            return;
        }
        self.last_excursion[i] = excursion;
        self.excursion_count[i] += 1;
        match self.excursion_count[i] {
            1 => {
                self.first_excursion[i] = excursion;
                self.first_hit[i] = time;
                self.visited.push(u);
            }
            2 => {
                self.multi.insert(u.0, vec![self.first_excursion[i], excursion]);
            }
            _ => self.multi.get_mut(&u.0).expect("multi entry").push(excursion),
        }
    }

    fn get<T: Copy + Default>(v: &[T], u: NodeId) -> T {
        v.get(u.index()).copied().unwrap_or_default()
    }

    /// 𝓛_u: visits to u.
    pub fn local_time(&self, u: NodeId) -> u32 {
        Self::get(&self.local_time, u)
    }

    /// N_u: crossings of the edge (u*, u) towards u.
    pub fn edge_local_time(&self, u: NodeId) -> u32 {
        Self::get(&self.edge_local_time, u)
    }

    /// E^s_u.
    pub fn excursion_count(&self, u: NodeId) -> u32 {
        Self::get(&self.excursion_count, u)
    }

    /// First excursion visiting u (1-based), if any.
    pub fn first_excursion(&self, u: NodeId) -> Option<u32> {
        let j = Self::get(&self.first_excursion, u);
        (j > 0).then_some(j)
    }

    /// T_u, the first hitting step.
    pub fn first_hit(&self, u: NodeId) -> Option<u64> {
        self.first_hit.get(u.index()).copied().filter(|&t| t != u64::MAX)
    }

    pub fn visited(&self, u: NodeId) -> bool {
        self.excursion_count(u) > 0
    }

    /// Vertices in order of first visit.
    pub fn visited_vertices(&self) -> &[NodeId] {
        &self.visited
    }

    /// Sorted indices of the excursions visiting u.
    pub fn excursions_of(&self, u: NodeId) -> Vec<u32> {
        match self.excursion_count(u) {
            0 => Vec::new(),
            1 => vec![self.first_excursion[u.index()]],
            _ => self.multi[&u.0].clone(),
        }
    }

    /// Local time of e* at the end of the run (= number of completed excursions).
    pub fn star_local_time(&self) -> u32 {
        self.excursions
    }

    pub fn excursion_stats(&self, u: NodeId) -> Result<ExcursionStats> {
        let count = self.excursion_count(u);
        if count == 0 {
            return Err(Error::UnknownVertex(u));
        }
        Ok(ExcursionStats { count, single: count == 1, first: self.first_excursion[u.index()] })
    }

    /// CSV of visited vertices in id order:
    /// `vertex_id,generation,local_time,edge_local_time,excursion_count,first_excursion`.
    pub fn write_csv<W: Write>(&self, tree: &MarkedTree, mut out: W) -> std::io::Result<()> {
        writeln!(out, "vertex_id,generation,local_time,edge_local_time,excursion_count,first_excursion")?;
        let mut ids: Vec<NodeId> = self.visited.clone();
        ids.sort_unstable();
        for u in ids {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                u,
                tree.generation(u),
                self.local_time(u),
                self.edge_local_time(u),
                self.excursion_count(u),
                self.first_excursion(u).unwrap_or(0)
            )?;
        }
        Ok(())
    }
}

/// A walk that stopped early, with what was recorded up to then.
#[derive(Debug)]
pub struct WalkFailure {
    pub error: Error,
    /// Step at which the run stopped.
    pub step: u64,
    pub partial: Box<WalkTrace>,
}

impl fmt::Display for WalkFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at step {})", self.error, self.step)
    }
}

impl std::error::Error for WalkFailure {}

impl From<WalkFailure> for Error {
    fn from(w: WalkFailure) -> Self {
        w.error
    }
}

/// Run the walk from e* until its `s`-th return to e*.
pub fn run_excursions<R: Rng + ?Sized>(
    tree: &mut MarkedTree,
    s: u32,
    step_budget: Option<u64>,
    rng: &mut R,
) -> std::result::Result<WalkTrace, WalkFailure> {
    let mut trace = WalkTrace { return_times: vec![0], ..WalkTrace::default() };
    if s == 0 {
        return Err(WalkFailure {
            error: Error::InvalidArgument("need at least one excursion".into()),
            step: 0,
            partial: Box::new(trace),
        });
    }
    trace.grow(tree.len());
    let budget = step_budget.unwrap_or(u64::MAX);
    let mut time = 0u64;
    for j in 1..=s {
        let mut site = Site::Star;
        loop {
            if time >= budget {
                trace.steps = time;
                return Err(WalkFailure {
                    error: Error::StepBudget { budget, completed: j - 1 },
                    step: time,
                    partial: Box::new(trace),
                });
            }
            let (next, down) = match step(tree, site, rng) {
                Ok(r) => r,
                Err(error) => {
                    trace.steps = time;
                    return Err(WalkFailure { error, step: time, partial: Box::new(trace) });
                }
            };
            time += 1;
            match next {
                Site::Star => break,
                Site::Vertex(u) => {
                    if u.index() >= trace.local_time.len() {
                        trace.grow(tree.len());
                    }
                    trace.record(u, down, j, time);
                }
            }
            site = next;
        }
        trace.return_times.push(time);
        trace.excursions = j;
    }
    trace.steps = time;
    trace.grow(tree.len());
    Ok(trace)
}

/// [`run_excursions`] that, on hitting the depth limit, doubles it and reruns
/// with a fresh generator from `make_rng`. Trees are keyed by their seed, so
/// the environment is unchanged and the rerun matches an unbounded run.
pub fn run_excursions_retrying<R, F>(
    tree: &mut MarkedTree,
    s: u32,
    step_budget: Option<u64>,
    max_depth_limit: u32,
    make_rng: F,
) -> Result<WalkTrace>
where
    R: Rng,
    F: Fn() -> R,
{
    let mut retries = 0;
    loop {
        let mut rng = make_rng();
        match run_excursions(tree, s, step_budget, &mut rng) {
            Ok(mut trace) => {
                trace.depth_retries = retries;
                return Ok(trace);
            }
            Err(WalkFailure { error: Error::DepthExceeded { .. }, .. }) if tree.depth_limit() < max_depth_limit => {
                let next = tree.depth_limit().saturating_mul(2).min(max_depth_limit);
                tree.set_depth_limit(next);
                retries += 1;
            }
            Err(f) => return Err(f.error),
        }
    }
}

/// 𝓛^n: visits to e* during the first `n` steps.
pub fn star_local_time_at<R: Rng + ?Sized>(tree: &mut MarkedTree, n: u64, rng: &mut R) -> Result<u64> {
    let mut site = Site::Star;
    let mut visits = 0;
    for _ in 0..n {
        site = step(tree, site, rng)?.0;
        if site == Site::Star {
            visits += 1;
        }
    }
    Ok(visits)
}

/// Visited vertices in a generation band.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSlice {
    pub lower: u32,
    pub upper: u32,
    /// 𝒟: visited vertices with lower ≤ |x| ≤ upper, in order of first visit.
    pub vertices: Vec<NodeId>,
    /// M: largest generation in the slice (None when empty).
    pub max_generation: Option<u32>,
}

impl RangeSlice {
    /// D = |𝒟|.
    pub fn size(&self) -> usize {
        self.vertices.len()
    }

    pub fn height(&self) -> u32 {
        self.upper - self.lower + 1
    }

    pub fn contains_generation(&self, g: u32) -> bool {
        self.lower <= g && g <= self.upper
    }
}

pub fn range_slice_band(trace: &WalkTrace, tree: &MarkedTree, lower: u32, upper: u32) -> RangeSlice {
    let vertices: Vec<NodeId> = trace
        .visited_vertices()
        .iter()
        .copied()
        .filter(|&u| (lower..=upper).contains(&tree.generation(u)))
        .collect();
    let max_generation = vertices.iter().map(|&u| tree.generation(u)).max();
    RangeSlice { lower, upper, vertices, max_generation }
}

pub fn range_slice(trace: &WalkTrace, tree: &MarkedTree, schedule: &Schedule) -> RangeSlice {
    let clamp = |g: u64| g.min(u64::from(u32::MAX)) as u32;
    range_slice_band(trace, tree, clamp(schedule.lower), clamp(schedule.upper))
}
