//! Generalized ranges A^k(𝒟, f) over visited vertices, their excursion-class
//! breakdown, quasi-independent ranges and the weighted sums 𝒜^k_l(f, β).

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genealogy::{first_full_split_unchecked, set_partitions, mobius_weight, Constraint};
use crate::par::{map_indexed, Execution};
use crate::quenched::falling_factorial;
use crate::stats::ExactSum;
use crate::tree::{AncestryIndex, MarkedTree, NodeId};
use crate::walk::{RangeSlice, WalkTrace};

/// Default bound on the number of ordered tuples an enumeration may visit.
pub const DEFAULT_TUPLE_CAP: f64 = 5e9;

/// Excursion class of a visited tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TupleClass {
    /// Some assignment of pairwise distinct excursions visits every coordinate.
    Distinct,
    /// No distinct assignment, but one excursion visits every coordinate.
    SameSingle,
    Mixed,
    NotAllVisited,
}

/// Masses of A^k(𝒟, f) carried by each excursion class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ClassBreakdown {
    pub distinct: f64,
    pub same_single: f64,
    pub mixed: f64,
}

/// One evaluation of A^k(𝒟, f).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeStat {
    pub k: usize,
    /// Completed excursions s of the trace.
    pub excursions: u32,
    pub constraint: String,
    pub value: f64,
    /// |Δ^k(𝒟)|.
    pub tuples: u64,
    /// (s·𝑳)^k with 𝑳 the band height.
    pub normalization: f64,
    /// Class masses of the f-weighted sum; they add up to `value`.
    pub classes: ClassBreakdown,
}

impl RangeStat {
    pub fn normalized(&self) -> f64 {
        self.value / self.normalization
    }
}

/// Options for tuple enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeOptions {
    pub exec: Execution,
    pub tuple_cap: f64,
}

impl Default for RangeOptions {
    fn default() -> Self {
        RangeOptions { exec: Execution::Parallel, tuple_cap: DEFAULT_TUPLE_CAP }
    }
}

/// Class of a tuple from the excursion sets of its coordinates.
pub fn classify_excursion_sets(sets: &[&[u32]]) -> TupleClass {
    if sets.iter().any(|s| s.is_empty()) {
        return TupleClass::NotAllVisited;
    }
    if has_distinct_assignment(sets) {
        return TupleClass::Distinct;
    }
    let first = sets[0];
    if first.iter().any(|e| sets[1..].iter().all(|s| s.binary_search(e).is_ok())) {
        TupleClass::SameSingle
    } else {
        TupleClass::Mixed
    }
}

/// Bipartite matching of coordinates to excursions (augmenting paths).
fn has_distinct_assignment(sets: &[&[u32]]) -> bool {
    if sets.iter().all(|s| s.len() == 1) {
        let mut v: Vec<u32> = sets.iter().map(|s| s[0]).collect();
        v.sort_unstable();
        return v.windows(2).all(|w| w[0] != w[1]);
    }
    fn augment(i: usize, sets: &[&[u32]], owner: &mut HashMap<u32, usize>, seen: &mut Vec<u32>) -> bool {
        for &e in sets[i] {
            if seen.contains(&e) {
                continue;
            }
            seen.push(e);
            let free = match owner.get(&e) {
                None => true,
                Some(&j) => augment(j, sets, owner, seen),
            };
            if free {
                owner.insert(e, i);
                return true;
            }
        }
        false
    }
    let mut owner = HashMap::new();
    (0..sets.len()).all(|i| augment(i, sets, &mut owner, &mut Vec::new()))
}

/// Class of the tuple x within the first s excursions of the trace.
pub fn classify_tuple_excursions(trace: &WalkTrace, x: &[NodeId], s: u32) -> TupleClass {
    let sets: Vec<Vec<u32>> = x
        .iter()
        .map(|&u| trace.excursions_of(u).into_iter().take_while(|&e| e <= s).collect())
        .collect();
    let refs: Vec<&[u32]> = sets.iter().map(Vec::as_slice).collect();
    classify_excursion_sets(&refs)
}

struct Shard {
    value: ExactSum,
    classes: [ExactSum; 3],
    tuples: u64,
}

/// A^k(𝒟, f) = Σ_{x∈Δ^k(𝒟)} f(x), with the breakdown of the sum over
/// excursion classes. Zero when |𝒟| < k.
pub fn general_range(
    tree: &MarkedTree,
    trace: &WalkTrace,
    slice: &RangeSlice,
    k: usize,
    f: &Constraint,
    opts: RangeOptions,
) -> Result<RangeStat> {
    let d = slice.size();
    let mut stat = RangeStat {
        k,
        excursions: trace.excursions,
        constraint: f.id(),
        value: 0.0,
        tuples: 0,
        normalization: (f64::from(trace.excursions) * f64::from(slice.height())).powi(k as i32),
        classes: ClassBreakdown::default(),
    };
    if k == 0 || d < k {
        return Ok(stat);
    }
    let count = falling_factorial(d as u64, k);
    if count > opts.tuple_cap {
        return Err(Error::CombinatorialCap { count, cap: opts.tuple_cap });
    }
    let index = AncestryIndex::new(tree);
    let sets: Vec<Vec<u32>> = slice.vertices.iter().map(|&u| trace.excursions_of(u)).collect();
    let vertices = &slice.vertices;
    let shards = map_indexed(opts.exec, d, |first| {
        let mut shard =
            Shard { value: ExactSum::new(), classes: [ExactSum::new(), ExactSum::new(), ExactSum::new()], tuples: 0 };
        let mut cur = vec![first];
        let mut tuple = Vec::with_capacity(k);
        extend(&index, vertices, k, &mut cur, &mut |idx| {
            tuple.clear();
            tuple.extend(idx.iter().map(|&i| vertices[i]));
            shard.tuples += 1;
            let fx = f.eval(tree, &tuple);
            if fx == 0.0 {
                return;
            }
            shard.value.add(fx);
            let refs: Vec<&[u32]> = idx.iter().map(|&i| sets[i].as_slice()).collect();
            match classify_excursion_sets(&refs) {
                TupleClass::Distinct => shard.classes[0].add(fx),
                TupleClass::SameSingle => shard.classes[1].add(fx),
                TupleClass::Mixed => shard.classes[2].add(fx),
                TupleClass::NotAllVisited => unreachable!("slice vertices are visited"),
            }
        });
        shard
    });
    let mut value = ExactSum::new();
    let mut classes = [ExactSum::new(), ExactSum::new(), ExactSum::new()];
    for s in &shards {
        value.merge(&s.value);
        for (c, sc) in classes.iter_mut().zip(&s.classes) {
            c.merge(sc);
        }
        stat.tuples += s.tuples;
    }
    stat.value = value.value();
    stat.classes = ClassBreakdown { distinct: classes[0].value(), same_single: classes[1].value(), mixed: classes[2].value() };
    Ok(stat)
}

/// Extend the index tuple `cur` by vertices unrelated to all its entries.
fn extend<F: FnMut(&[usize])>(index: &AncestryIndex, vertices: &[NodeId], k: usize, cur: &mut Vec<usize>, visit: &mut F) {
    if cur.len() == k {
        visit(cur);
        return;
    }
    for (i, &v) in vertices.iter().enumerate() {
        if cur.iter().all(|&j| !index.related(vertices[j], v)) {
            cur.push(i);
            extend(index, vertices, k, cur, visit);
            cur.pop();
        }
    }
}

fn check_j(j: &[u32]) -> Result<()> {
    let mut sorted = j.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(format!("excursion indices {j:?} repeat")));
    }
    if sorted.first() == Some(&0) {
        return Err(Error::InvalidArgument("excursion indices are 1-based".into()));
    }
    Ok(())
}

/// 𝒜^{k,n}(j, g) = Σ_{x∈Δ^k(𝒟)} g(x) ∏_i 1{x^{(i)} visited during excursion j_i}.
pub fn quasi_independent_range(
    tree: &MarkedTree,
    trace: &WalkTrace,
    slice: &RangeSlice,
    j: &[u32],
    g: &Constraint,
) -> Result<f64> {
    check_j(j)?;
    let index = AncestryIndex::new(tree);
    let pools: Vec<Vec<NodeId>> = j
        .iter()
        .map(|&e| slice.vertices.iter().copied().filter(|&u| trace.excursions_of(u).binary_search(&e).is_ok()).collect())
        .collect();
    fn rec(
        tree: &MarkedTree,
        index: &AncestryIndex,
        pools: &[Vec<NodeId>],
        g: &Constraint,
        cur: &mut Vec<NodeId>,
        acc: &mut ExactSum,
    ) {
        let i = cur.len();
        if i == pools.len() {
            acc.add(g.eval(tree, cur));
            return;
        }
        for &v in &pools[i] {
            if cur.iter().all(|&u| !index.related(u, v)) {
                cur.push(v);
                rec(tree, index, pools, g, cur, acc);
                cur.pop();
            }
        }
    }
    let mut acc = ExactSum::new();
    rec(tree, &index, &pools, g, &mut Vec::with_capacity(j.len()), &mut acc);
    Ok(acc.value())
}

/// Σ_{j∈⟦1,s⟧_k} 𝒜^{k,n}(j, g) with s the trace's excursion count, evaluated
/// per tuple as g(x) times the number of injective excursion assignments
/// (inclusion–exclusion over set partitions of the coordinates).
pub fn quasi_independent_total(
    tree: &MarkedTree,
    trace: &WalkTrace,
    slice: &RangeSlice,
    k: usize,
    g: &Constraint,
    opts: RangeOptions,
) -> Result<f64> {
    let d = slice.size();
    if k == 0 || d < k {
        return Ok(0.0);
    }
    let count = falling_factorial(d as u64, k);
    if count > opts.tuple_cap {
        return Err(Error::CombinatorialCap { count, cap: opts.tuple_cap });
    }
    let index = AncestryIndex::new(tree);
    let sets: Vec<Vec<u32>> = slice.vertices.iter().map(|&u| trace.excursions_of(u)).collect();
    let partitions: Vec<(i64, Vec<Vec<usize>>)> =
        set_partitions(k).iter().map(|p| (mobius_weight(p), p.blocks())).collect();
    let vertices = &slice.vertices;
    let shards = map_indexed(opts.exec, d, |first| {
        let mut acc = ExactSum::new();
        let mut tuple = Vec::with_capacity(k);
        extend(&index, vertices, k, &mut vec![first], &mut |idx| {
            let injective: i64 = if idx.iter().all(|&i| sets[i].len() == 1) {
                let mut firsts: Vec<u32> = idx.iter().map(|&i| sets[i][0]).collect();
                firsts.sort_unstable();
                i64::from(firsts.windows(2).all(|w| w[0] != w[1]))
            } else {
                partitions
                    .iter()
                    .map(|(mu, blocks)| {
                        mu * blocks
                            .iter()
                            .map(|b| common_count(b.iter().map(|&e| sets[idx[e - 1]].as_slice())) as i64)
                            .product::<i64>()
                    })
                    .sum()
            };
            if injective == 0 {
                return;
            }
            tuple.clear();
            tuple.extend(idx.iter().map(|&i| vertices[i]));
            acc.add(injective as f64 * g.eval(tree, &tuple));
        });
        acc
    });
    let mut total = ExactSum::new();
    for s in &shards {
        total.merge(s);
    }
    Ok(total.value())
}

fn common_count<'a>(mut sets: impl Iterator<Item = &'a [u32]>) -> usize {
    let first = sets.next().unwrap();
    let rest: Vec<&[u32]> = sets.collect();
    first.iter().filter(|e| rest.iter().all(|s| s.binary_search(e).is_ok())).count()
}

/// 𝒜^k_l(f, β) = Σ_{x∈Δ^k_l} f(x) e^{−Σ_i β_i V(x^{(i)})} over ordered
/// k-tuples of distinct generation-l vertices. Completes generation l first.
pub fn weighted_range_a_l(
    tree: &mut MarkedTree,
    k: usize,
    l: u32,
    f: &Constraint,
    beta: &[f64],
    tuple_cap: f64,
) -> Result<f64> {
    Ok(weighted_range_a_l_exact(tree, k, l, f, beta, tuple_cap)?.value())
}

/// [`weighted_range_a_l`] as an unrounded sum, for exact merging.
pub fn weighted_range_a_l_exact(
    tree: &mut MarkedTree,
    k: usize,
    l: u32,
    f: &Constraint,
    beta: &[f64],
    tuple_cap: f64,
) -> Result<ExactSum> {
    if beta.len() != k {
        return Err(Error::InvalidArgument(format!("β has {} entries for k = {k}", beta.len())));
    }
    tree.complete_level(l)?;
    let tree = &*tree;
    let level = tree.level(l);
    if level.len() < k {
        return Ok(ExactSum::new());
    }
    let count = falling_factorial(level.len() as u64, k);
    if count > tuple_cap {
        return Err(Error::CombinatorialCap { count, cap: tuple_cap });
    }
    fn rec(
        tree: &MarkedTree,
        level: &[NodeId],
        f: &Constraint,
        beta: &[f64],
        cur: &mut Vec<NodeId>,
        acc: &mut ExactSum,
    ) {
        if cur.len() == beta.len() {
            let fx = f.eval(tree, cur);
            if fx != 0.0 {
                let e: f64 = cur.iter().zip(beta).map(|(&u, &b)| b * tree.potential(u)).sum();
                acc.add(fx * (-e).exp());
            }
            return;
        }
        for &v in level {
            if !cur.contains(&v) {
                cur.push(v);
                rec(tree, level, f, beta, cur, acc);
                cur.pop();
            }
        }
    }
    let mut acc = ExactSum::new();
    rec(tree, level, f, beta, &mut Vec::with_capacity(k), &mut acc);
    Ok(acc)
}

/// Ordered non-ancestral pairs of `members` grouped by the generation of
/// their MRCA: entry g holds Σ w(x)w(y) over pairs with |x∧y| = g.
/// Runs in one pass over the stored tree (ids increase from parent to child).
pub fn pair_mrca_histogram(tree: &MarkedTree, members: &[(NodeId, f64)]) -> Vec<f64> {
    let n = tree.len();
    let mut sub = vec![0.0f64; n];
    let mut child_sum = vec![0.0f64; n];
    let mut child_sq = vec![0.0f64; n];
    for &(u, w) in members {
        sub[u.index()] += w;
    }
    let mut hist = Vec::new();
    for i in (0..n).rev() {
        let u = NodeId(i as u32);
        let s_u = sub[i] + child_sum[i];
        let pairs = child_sum[i] * child_sum[i] - child_sq[i];
        if pairs != 0.0 {
            let g = tree.generation(u) as usize;
            if hist.len() <= g {
                hist.resize(g + 1, 0.0);
            }
            hist[g] += pairs;
        }
        if let Some(p) = tree.parent(u) {
            child_sum[p.index()] += s_u;
            child_sq[p.index()] += s_u * s_u;
        }
    }
    hist
}

/// Integer version of [`pair_mrca_histogram`] with unit weights.
pub fn pair_mrca_counts(tree: &MarkedTree, members: &[NodeId]) -> Vec<u64> {
    let n = tree.len();
    let mut sub = vec![0u64; n];
    let mut child_sum = vec![0u64; n];
    let mut child_sq = vec![0u64; n];
    for &u in members {
        sub[u.index()] += 1;
    }
    let mut hist = Vec::new();
    for i in (0..n).rev() {
        let u = NodeId(i as u32);
        let s_u = sub[i] + child_sum[i];
        let pairs = child_sum[i] * child_sum[i] - child_sq[i];
        if pairs != 0 {
            let g = tree.generation(u) as usize;
            if hist.len() <= g {
                hist.resize(g + 1, 0);
            }
            hist[g] += pairs;
        }
        if let Some(p) = tree.parent(u) {
            child_sum[p.index()] += s_u;
            child_sq[p.index()] += s_u * s_u;
        }
    }
    hist
}

/// A^2(𝒟, f_m) = #{x ∈ Δ²(𝒟): S²(x) ≤ m} for every m, from the MRCA
/// histogram: entry m−1 of the cumulative sum.
pub fn pair_split_counts(tree: &MarkedTree, slice: &RangeSlice) -> Vec<u64> {
    let hist = pair_mrca_counts(tree, &slice.vertices);
    hist.iter()
        .scan(0u64, |acc, &h| {
            *acc += h;
            Some(*acc)
        })
        .collect()
}

/// |Δ²(𝒟)| = D² − D − 2 Σ_{u∈𝒟}(|u| − lower), valid when every band ancestor
/// of a slice vertex is itself in the slice (true for walk ranges).
pub fn pair_total_closed(tree: &MarkedTree, slice: &RangeSlice) -> u64 {
    let d = slice.size() as u64;
    let depth: u64 = slice.vertices.iter().map(|&u| u64::from(tree.generation(u) - slice.lower)).sum();
    d * d - d - 2 * depth
}

/// k = 2 class counts (|Δ²(𝒟)|, pairs in 𝔈, pairs visited in one common
/// excursion only). A pair falls outside 𝔈 exactly when both vertices are
/// visited in the same single excursion.
pub fn pair_class_counts(tree: &MarkedTree, trace: &WalkTrace, slice: &RangeSlice) -> (u64, u64, u64) {
    let total: u64 = pair_mrca_counts(tree, &slice.vertices).iter().sum();
    let mut label = vec![0u32; tree.len()];
    let mut groups: HashMap<u32, u64> = HashMap::new();
    for &u in &slice.vertices {
        if trace.excursion_count(u) == 1 {
            let e = trace.first_excursion(u).unwrap();
            label[u.index()] = e;
            *groups.entry(e).or_default() += 1;
        }
    }
    let mut ancestral = 0u64;
    for &u in &slice.vertices {
        let e = label[u.index()];
        if e == 0 {
            continue;
        }
        let mut cur = u;
        while tree.generation(cur) > slice.lower {
            cur = tree.parent(cur).unwrap();
            if label[cur.index()] == e {
                ancestral += 1;
            }
        }
    }
    let same: u64 = groups.values().map(|&g| g * g - g).sum::<u64>() - 2 * ancestral;
    (total, total - same, same)
}

/// Uniform draw from Δ^k(𝒟), optionally conditioned on S^k(x) ≤ 𝔰, by
/// rejection from uniformly drawn ordered tuples of distinct slice vertices.
pub fn sample_uniform_tuple<R: Rng + ?Sized>(
    tree: &MarkedTree,
    slice: &RangeSlice,
    k: usize,
    split_by: Option<u32>,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    const MAX_ATTEMPTS: usize = 10_000_000;
    let d = slice.size();
    if d < k || k == 0 {
        return Err(Error::EmptySupport(format!("slice of {d} vertices cannot hold a {k}-tuple")));
    }
    let mut x = Vec::with_capacity(k);
    'attempt: for _ in 0..MAX_ATTEMPTS {
        x.clear();
        for _ in 0..k {
            let v = slice.vertices[rng.random_range(0..d)];
            if x.iter().any(|&u| tree.is_ancestor_or_equal(u, v) || tree.is_ancestor_or_equal(v, u)) {
                continue 'attempt;
            }
            x.push(v);
        }
        if split_by.is_some_and(|m| first_full_split_unchecked(tree, &x) > m) {
            continue;
        }
        return Ok(x);
    }
    Err(Error::EmptySupport(format!("no admissible {k}-tuple found in {MAX_ATTEMPTS} attempts")))
}

pub const CSV_HEADER: &str = "n,s,k,constraint,value,normalized_value,tuples,distinct,same_single,mixed";

/// One CSV row per (n, stat).
pub fn write_range_csv<W: Write>(rows: &[(u64, RangeStat)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (n, r) in rows {
        writeln!(
            out,
            "{n},{},{},\"{}\",{},{},{},{},{},{}",
            r.excursions,
            r.k,
            r.constraint.replace('"', "\"\""),
            r.value,
            r.normalized(),
            r.tuples,
            r.classes.distinct,
            r.classes.same_single,
            r.classes.mixed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentLaw;
    use crate::genealogy::{signatures, Constraint};
    use crate::rng::stream;
    use crate::tree::{enumerate_delta_k, TreeBuilder};
    use crate::walk::{range_slice_band, run_excursions};
    use std::sync::Arc;

    fn walked(seed: u64, s: u32) -> (MarkedTree, WalkTrace) {
        let law = Arc::new(EnvironmentLaw::reference());
        // Excursion heights are heavy-tailed; skip the rare environments whose
        // walk exceeds a small step budget so that tests stay fast.
        for attempt in 0.. {
            let mut t = MarkedTree::lazy(law.clone(), seed, crate::tree::TreeOptions::with_depth(1_000_000)).unwrap();
            let mut rng = stream(seed, "range-walk", attempt);
            if let Ok(trace) = run_excursions(&mut t, s, Some(200_000), &mut rng) {
                return (t, trace);
            }
        }
        unreachable!()
    }

    fn seq() -> RangeOptions {
        RangeOptions { exec: Execution::Sequential, ..Default::default() }
    }

    #[test]
    fn class_examples() {
        assert_eq!(classify_excursion_sets(&[&[3], &[3]]), TupleClass::SameSingle);
        assert_eq!(classify_excursion_sets(&[&[1], &[4]]), TupleClass::Distinct);
        assert_eq!(classify_excursion_sets(&[&[2], &[2], &[5]]), TupleClass::Mixed);
        assert_eq!(classify_excursion_sets(&[&[2, 3], &[2], &[5]]), TupleClass::Distinct);
        assert_eq!(classify_excursion_sets(&[&[2, 5], &[2], &[2, 5]]), TupleClass::SameSingle);
        assert_eq!(classify_excursion_sets(&[&[], &[2]]), TupleClass::NotAllVisited);
    }

    #[test]
    fn single_generation_counts() {
        let (t, trace) = walked(1, 30);
        let slice = range_slice_band(&trace, &t, 3, 3);
        let d = slice.size() as u64;
        assert!(d >= 3);
        for k in 1..=3 {
            let r = general_range(&t, &trace, &slice, k, &Constraint::One, seq()).unwrap();
            assert_eq!(r.value, falling_factorial(d, k));
            assert_eq!(r.tuples as f64, falling_factorial(d, k));
        }
        let tiny = RangeSlice { vertices: slice.vertices[..1].to_vec(), ..slice.clone() };
        assert_eq!(general_range(&t, &trace, &tiny, 2, &Constraint::One, seq()).unwrap().value, 0.0);
    }

    #[test]
    fn decomposition_monotonicity_and_parallel_agreement() {
        for seed in 0..4 {
            let (t, trace) = walked(seed, 25);
            let slice = range_slice_band(&trace, &t, 2, 6);
            for k in 2..=3 {
                let one = general_range(&t, &trace, &slice, k, &Constraint::One, seq()).unwrap();
                let c = one.classes;
                assert_eq!(c.distinct + c.same_single + c.mixed, one.value);
                assert_eq!(one.value, one.tuples as f64);
                if k == 2 {
                    assert_eq!(c.mixed, 0.0);
                }
                let par = general_range(&t, &trace, &slice, k, &Constraint::One, RangeOptions::default()).unwrap();
                assert_eq!(par, one);
                let mut prev = 0.0;
                for m in 1..8 {
                    let v = general_range(&t, &trace, &slice, k, &Constraint::f_m(m), seq()).unwrap().value;
                    assert!(v >= prev);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn linearity() {
        let (t, trace) = walked(9, 20);
        let slice = range_slice_band(&trace, &t, 1, 5);
        let f = Constraint::f_m(3);
        let g = Constraint::f_lambda(vec![Some(2), None]);
        let (f2, g2) = (f.clone(), g.clone());
        let h = Constraint::custom("3f+g", 3, move |t, x| 3.0 * f2.eval(t, x) + g2.eval(t, x));
        let a = |c: &Constraint| general_range(&t, &trace, &slice, 3, c, seq()).unwrap().value;
        assert_eq!(a(&h), 3.0 * a(&f) + a(&g));
    }

    #[test]
    fn restriction_consistency() {
        let (t, trace) = walked(4, 30);
        let slice = range_slice_band(&trace, &t, 1, 7);
        let m = 4;
        let lam = Constraint::f_lambda(vec![Some(3)]);
        let direct = {
            let lam = lam.clone();
            Constraint::custom("lambda·split", m, move |t, x| lam.eval(t, x) * Constraint::f_m(m).eval(t, x))
        };
        let factored = {
            let lam = lam.clone();
            Constraint::custom("lambda-at-ancestors", m, move |t, x| {
                if first_full_split_unchecked(t, x) > m {
                    return 0.0;
                }
                let y: Vec<NodeId> = x.iter().map(|&u| t.ancestor(u, m.min(t.generation(u)))).collect();
                lam.eval(t, &y)
            })
        };
        let a = general_range(&t, &trace, &slice, 2, &direct, seq()).unwrap().value;
        let b = general_range(&t, &trace, &slice, 2, &factored, seq()).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn quasi_independent_examples() {
        let mut b = TreeBuilder::new();
        let c = b.children(NodeId::ROOT, &[0.0, 0.0]);
        let t = b.build();
        let slice = RangeSlice { lower: 1, upper: 1, vertices: c.clone(), max_generation: Some(1) };
        let trace = crate::walk::tests_support::trace_with_excursions(&t, &[(c[0], vec![1]), (c[1], vec![2])], 2);
        assert_eq!(quasi_independent_range(&t, &trace, &slice, &[1, 2], &Constraint::One).unwrap(), 1.0);
        assert_eq!(quasi_independent_range(&t, &trace, &slice, &[2, 1], &Constraint::One).unwrap(), 1.0);
        assert_eq!(quasi_independent_range(&t, &trace, &slice, &[3, 4], &Constraint::One).unwrap(), 0.0);
        assert!(quasi_independent_range(&t, &trace, &slice, &[1, 1], &Constraint::One).is_err());
    }

    #[test]
    fn quasi_independent_total_matches_sum_over_j_and_bounds_distinct_single() {
        for seed in 0..3 {
            let (t, trace) = walked(20 + seed, 6);
            let slice = range_slice_band(&trace, &t, 1, 4);
            let s = trace.excursions;
            for k in 2..=3 {
                let g = Constraint::f_m(3);
                let mut brute = ExactSum::new();
                let mut j = vec![0u32; k];
                fn all(s: u32, i: usize, j: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
                    if i == j.len() {
                        out.push(j.clone());
                        return;
                    }
                    for e in 1..=s {
                        if !j[..i].contains(&e) {
                            j[i] = e;
                            all(s, i + 1, j, out);
                        }
                    }
                }
                let mut js = Vec::new();
                all(s, 0, &mut j, &mut js);
                for j in &js {
                    brute.add(quasi_independent_range(&t, &trace, &slice, j, &g).unwrap());
                }
                let total = quasi_independent_total(&t, &trace, &slice, k, &g, seq()).unwrap();
                assert_eq!(total, brute.value());
                // tuples in 𝔈 whose vertices are all single-excursion
                let g2 = g.clone();
                let tr = trace.clone();
                let single_distinct = Constraint::custom("g·1{E∩S}", 3, move |t, x| {
                    let single = x.iter().all(|&u| tr.excursion_count(u) == 1);
                    let distinct = classify_tuple_excursions(&tr, x, tr.excursions) == TupleClass::Distinct;
                    if single && distinct { g2.eval(t, x) } else { 0.0 }
                });
                let bound = general_range(&t, &trace, &slice, k, &single_distinct, seq()).unwrap().value;
                assert!(total >= bound);
            }
        }
    }

    #[test]
    fn weighted_range_identities() {
        let law = Arc::new(EnvironmentLaw::reference());
        for seed in 0..3 {
            let mut t = MarkedTree::generate(law.clone(), 5, 70 + seed).unwrap();
            for k in 2..=3 {
                let beta = vec![1.0; k];
                for l in 1..=5 {
                    let one = weighted_range_a_l(&mut t, k, l, &Constraint::One, &beta, DEFAULT_TUPLE_CAP).unwrap();
                    let mut acc = ExactSum::new();
                    for sig in signatures(k, l).unwrap() {
                        acc.add(weighted_range_a_l(&mut t, k, l, &Constraint::Genealogy(sig), &beta, DEFAULT_TUPLE_CAP).unwrap());
                    }
                    assert!((acc.value() - one).abs() <= 1e-12 * one.abs().max(1.0));
                    let w = t.additive_martingale(l).unwrap();
                    assert!(w.powi(k as i32) - one >= -1e-12);
                }
            }
        }
        let mut b = TreeBuilder::new();
        let c = b.children(NodeId::ROOT, &[0.5]);
        b.children(c[0], &[0.1, 0.2]);
        let mut t = b.build();
        assert_eq!(weighted_range_a_l(&mut t, 2, 1, &Constraint::One, &[1.0, 1.0], 1e6).unwrap(), 0.0);
        let v = weighted_range_a_l(&mut t, 2, 2, &Constraint::One, &[1.0, 1.0], 1e6).unwrap();
        assert!((v - 2.0 * (-(0.6f64 + 0.7)).exp()).abs() < 1e-14);
    }

    #[test]
    fn pair_fast_paths_match_enumeration() {
        for seed in 0..5 {
            let (t, trace) = walked(40 + seed, 30);
            let slice = range_slice_band(&trace, &t, 2, 8);
            let total = general_range(&t, &trace, &slice, 2, &Constraint::One, seq()).unwrap();
            let (all, distinct, same) = pair_class_counts(&t, &trace, &slice);
            assert_eq!(all, total.tuples);
            assert_eq!(pair_total_closed(&t, &slice), all);
            assert_eq!(distinct as f64, total.classes.distinct);
            assert_eq!(same as f64, total.classes.same_single);
            let cum = pair_split_counts(&t, &slice);
            for m in 1..=cum.len() as u32 {
                let direct = general_range(&t, &trace, &slice, 2, &Constraint::f_m(m), seq()).unwrap().value;
                assert_eq!(cum[(m - 1) as usize] as f64, direct);
            }
            let weighted: Vec<(NodeId, f64)> = slice.vertices.iter().map(|&u| (u, 1.0)).collect();
            let h = pair_mrca_histogram(&t, &weighted);
            assert_eq!(h.iter().sum::<f64>(), all as f64);
        }
    }

    #[test]
    fn uniform_sampler() {
        let mut b = TreeBuilder::new();
        let c = b.children(NodeId::ROOT, &[0.0, 0.0]);
        let g = b.children(c[0], &[0.0, 0.0]);
        let t = b.build();
        let slice = RangeSlice { lower: 1, upper: 1, vertices: c.clone(), max_generation: Some(1) };
        let mut rng = stream(2, "sampler", 0);
        let n = 10_000;
        let hits = (0..n).filter(|_| sample_uniform_tuple(&t, &slice, 2, None, &mut rng).unwrap()[0] == c[0]).count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
        let one = RangeSlice { vertices: vec![c[0]], ..slice.clone() };
        assert!(sample_uniform_tuple(&t, &one, 2, None, &mut rng).is_err());
        // pairs of {c1, g0, g1}: only (g0,g1) has S = 2, the others split at 1
        let mixed = RangeSlice { lower: 1, upper: 2, vertices: vec![c[1], g[0], g[1]], max_generation: Some(2) };
        for _ in 0..1000 {
            let x = sample_uniform_tuple(&t, &mixed, 2, Some(1), &mut rng).unwrap();
            assert_eq!(first_full_split_unchecked(&t, &x), 1);
            assert!(x.contains(&c[1]));
        }
        let deep = RangeSlice { lower: 2, upper: 2, vertices: vec![g[0], g[1]], max_generation: Some(2) };
        assert!(matches!(sample_uniform_tuple(&t, &deep, 2, Some(1), &mut rng), Err(Error::EmptySupport(_))));
    }

    #[test]
    fn sampler_is_uniform_over_delta() {
        let (t, slice, tuples) = (77..)
            .map(|seed| {
                let (t, trace) = walked(seed, 40);
                let slice = range_slice_band(&trace, &t, 1, 4);
                let tuples = enumerate_delta_k(&t, &slice.vertices, 2);
                (t, slice, tuples)
            })
            .find(|(_, _, x)| (6..=60).contains(&x.len()))
            .unwrap();
        let mut counts: HashMap<Vec<NodeId>, usize> = HashMap::new();
        let mut rng = stream(3, "sampler-uniform", 0);
        let n = 20_000 * tuples.len().min(10);
        for _ in 0..n {
            *counts.entry(sample_uniform_tuple(&t, &slice, 2, None, &mut rng).unwrap()).or_default() += 1;
        }
        let expected = n as f64 / tuples.len() as f64;
        let chi2: f64 = tuples.iter().map(|x| (counts.get(x).copied().unwrap_or(0) as f64 - expected).powi(2) / expected).sum();
        let df = (tuples.len() - 1) as f64;
        assert!(chi2 < df + 6.0 * (2.0 * df).sqrt(), "chi2 {chi2} df {df}");
    }

    #[test]
    fn csv_rows() {
        let (t, trace) = walked(1, 10);
        let slice = range_slice_band(&trace, &t, 1, 3);
        let r = general_range(&t, &trace, &slice, 2, &Constraint::f_lambda(vec![Some(2)]), seq()).unwrap();
        let mut buf = Vec::new();
        write_range_csv(&[(100, r)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.lines().nth(1).unwrap().starts_with("100,10,2,\"lambda:2\","));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn range_bounded_by_tuple_count(seed in 0u64..1000, m in 1u32..6) {
            let (t, trace) = walked(seed, 12);
            let slice = range_slice_band(&trace, &t, 1, 5);
            let r = general_range(&t, &trace, &slice, 2, &Constraint::f_m(m), seq()).unwrap();
            proptest::prop_assert!(r.value >= 0.0 && r.value <= r.tuples as f64);
        }
    }
}
