//! Exact quenched analytics: hitting probabilities through the conductance
//! formula, an independent linear-system oracle, and quenched means.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::environment::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::genealogy::first_full_split_unchecked;
use crate::par::Execution;
use crate::stats::{monte_carlo, Estimate, ExactSum};
use crate::tree::{for_each_delta_k, AncestryIndex, MarkedTree, NodeId};

/// Oracle systems with fewer states than this are solved directly.
pub const DENSE_LIMIT: usize = 2000;
pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// P_z(T_x < T^1) = Σ_{e≤w≤z} e^{V(w)} / Σ_{e≤w≤x} e^{V(w)} for z on ⟦e, x⟧.
/// With z = e this is the probability, starting from e*, to reach x before
/// returning to e*.
pub fn hit_before_return(tree: &MarkedTree, z: NodeId, x: NodeId) -> Result<f64> {
    if !tree.is_ancestor_or_equal(z, x) {
        return Err(Error::Ancestry { ancestor: z, descendant: x });
    }
    Ok((tree.log_path_sum(z) - tree.log_path_sum(x)).exp())
}

/// P(T_x < T^1) from e*: e^{−V(x)} / H_x.
pub fn hit_probability(tree: &MarkedTree, x: NodeId) -> f64 {
    (-tree.log_path_sum(x)).exp()
}

/// Solve the harmonic system h(u) = Σ_v p(u, v) h(v), h(x) = 1, h(e*) = 0 on
/// the stored vertices (unexpanded vertices reflect) and return h(z).
pub fn hit_before_return_oracle(tree: &MarkedTree, z: NodeId, x: NodeId) -> Result<f64> {
    if z == x {
        return Ok(1.0);
    }
    let index = AncestryIndex::new(tree);
    // Descendants of x cannot be reached before x.
    let states: Vec<NodeId> = tree.nodes().filter(|&u| u == x || !index.is_ancestor_or_equal(x, u)).collect();
    let mut slot = vec![usize::MAX; tree.len()];
    let mut n = 0;
    for &u in &states {
        if u != x {
            slot[u.index()] = n;
            n += 1;
        }
    }
    // Row u: h(u) − Σ_{v≠x} p(u,v) h(v) = p(u, x).
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for &u in &states {
        if u == x {
            continue;
        }
        let vu = tree.potential(u);
        let mut neighbours: Vec<(Option<NodeId>, f64)> = vec![(tree.parent(u), 1.0)];
        for c in tree.children(u) {
            neighbours.push((Some(c), (vu - tree.potential(c)).exp()));
        }
        let total: f64 = neighbours.iter().map(|p| p.1).sum();
        let mut row = Vec::new();
        let mut b = 0.0;
        for (v, w) in neighbours {
            let p = w / total;
            match v {
                None => {}
                Some(v) if v == x => b += p,
                Some(v) => row.push((slot[v.index()], p)),
            }
        }
        rows.push(row);
        rhs.push(b);
    }
    let target = slot[z.index()];
    if target == usize::MAX {
        return Err(Error::InvalidArgument(format!("{z} lies below {x}")));
    }
    let h = if n < DENSE_LIMIT { solve_dense(&rows, &rhs)? } else { solve_iterative(&rows, &rhs)? };
    Ok(h[target])
}

fn solve_dense(rows: &[Vec<(usize, f64)>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rows.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, p) in row {
            a[(i, j)] -= p;
        }
    }
    let b = DVector::from_column_slice(rhs);
    let sol = a.lu().solve(&b).ok_or(Error::Solver { residual: f64::INFINITY, iterations: 0 })?;
    Ok(sol.iter().copied().collect())
}

fn solve_iterative(rows: &[Vec<(usize, f64)>], rhs: &[f64]) -> Result<Vec<f64>> {
    const MAX_ITER: usize = 200_000;
    const OMEGA: f64 = 1.0;
    let n = rows.len();
    let mut h = vec![0.0; n];
    for iter in 0..MAX_ITER {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let new = rhs[i] + rows[i].iter().map(|&(j, p)| p * h[j]).sum::<f64>();
            let upd = h[i] + OMEGA * (new - h[i]);
            delta = delta.max((upd - h[i]).abs());
            h[i] = upd;
        }
        if delta < ORACLE_TOLERANCE * 1e-2 {
            let residual = (0..n)
                .map(|i| (h[i] - rhs[i] - rows[i].iter().map(|&(j, p)| p * h[j]).sum::<f64>()).abs())
                .fold(0.0, f64::max);
            if residual < ORACLE_TOLERANCE {
                return Ok(h);
            }
        }
        if iter + 1 == MAX_ITER {
            let residual = (0..n)
                .map(|i| (h[i] - rhs[i] - rows[i].iter().map(|&(j, p)| p * h[j]).sum::<f64>()).abs())
                .fold(0.0, f64::max);
            return Err(Error::Solver { residual, iterations: MAX_ITER });
        }
    }
    unreachable!()
}

/// Falling factorial s(s−1)⋯(s−k+1).
pub fn falling_factorial(s: u64, k: usize) -> f64 {
    (0..k as u64).map(|i| s.saturating_sub(i) as f64).product()
}

/// Quenched mean of Σ_j 𝒜^{k,n}(j, f·1_{𝒞^k_{a}}) over s excursions:
/// s(s−1)⋯(s−k+1) Σ_{x∈Δ^k(vertices)} f(x) 1{S^k(x) ≤ a} ∏ e^{−V(x_i)}/H_{x_i}.
pub fn quenched_mean_quasi_independent<F>(
    tree: &MarkedTree,
    vertices: &[NodeId],
    s: u64,
    k: usize,
    split_cap: u32,
    f: F,
    tuple_cap: f64,
) -> Result<f64>
where
    F: Fn(&MarkedTree, &[NodeId]) -> f64,
{
    let count = falling_factorial(vertices.len() as u64, k);
    if count > tuple_cap {
        return Err(Error::CombinatorialCap { count, cap: tuple_cap });
    }
    let ff = falling_factorial(s, k);
    if ff == 0.0 {
        return Ok(0.0);
    }
    let index = AncestryIndex::new(tree);
    let mut acc = ExactSum::new();
    for_each_delta_k(&index, vertices, k, |x| {
        if first_full_split_unchecked(tree, x) > split_cap {
            return;
        }
        let fx = f(tree, x);
        if fx != 0.0 {
            let log_p: f64 = x.iter().map(|&u| -tree.log_path_sum(u)).sum();
            acc.add(fx * log_p.exp());
        }
    });
    Ok(ff * acc.value())
}

/// Options for [`phi`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiOptions {
    pub replicas: usize,
    pub seed: u64,
    pub exec: Execution,
    /// Russian-roulette threshold on e^{−V}·weight; subtrees below it are
    /// pruned at random with compensating weights (unbiased).
    pub roulette: f64,
}

impl Default for PhiOptions {
    fn default() -> Self {
        PhiOptions { replicas: 10_000, seed: 0, exec: Execution::Parallel, roulette: 1.0 / 64.0 }
    }
}

/// φ(r) = E[Σ_{|x|=d} e^{−V(x)} ((r−1) e^{−V(x)} + H_x)^{−1}] with d = p − a_n.
pub fn phi(law: &EnvironmentLaw, depth: u32, r: f64, opts: PhiOptions) -> Result<Estimate> {
    if r < 1.0 {
        return Err(Error::InvalidArgument(format!("r = {r} must be at least 1")));
    }
    if opts.replicas == 0 {
        return Err(Error::InvalidArgument("need at least one replica".into()));
    }
    Ok(monte_carlo(opts.exec, opts.seed, "phi", opts.replicas, |rng| phi_sample(law, depth, r, opts.roulette, rng)))
}

fn phi_sample<R: Rng + ?Sized>(law: &EnvironmentLaw, depth: u32, r: f64, threshold: f64, rng: &mut R) -> f64 {
    struct Particle {
        v: f64,
        log_h: f64,
        generation: u32,
        weight: f64,
    }
    let mut total = 0.0;
    let mut stack = vec![Particle { v: 0.0, log_h: 0.0, generation: 0, weight: 1.0 }];
    while let Some(p) = stack.pop() {
        if p.generation == depth {
            total += p.weight / ((r - 1.0) + (p.log_h + p.v).exp());
            continue;
        }
        for a in law.sample_offspring(rng) {
            let v = p.v + a;
            let log_h = {
                let x = p.log_h - a;
                if x > 30.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            };
            let mut weight = p.weight;
            let importance = weight * (-v).exp();
            if importance < threshold {
                let keep = importance / threshold;
                if rng.random::<f64>() >= keep {
                    continue;
                }
                weight /= keep;
            }
            stack.push(Particle { v, log_h, generation: p.generation + 1, weight });
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tree::TreeBuilder;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    #[test]
    fn closed_form_small_cases() {
        let mut b = TreeBuilder::new();
        let x = b.children(NodeId::ROOT, &[0.0])[0];
        let t = b.build();
        assert_abs_diff_eq!(hit_before_return(&t, NodeId::ROOT, x).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(hit_before_return(&t, x, x).unwrap(), 1.0);
        let v = 0.8;
        let (t, ids) = TreeBuilder::path(&[v]);
        let p = hit_before_return(&t, NodeId::ROOT, ids[1]).unwrap();
        assert_abs_diff_eq!(p, 1.0 / (1.0 + v.exp()), epsilon = 1e-15);
        // first step from e: up with weight 1, down with e^{−v}; from x the walk
        // has already arrived
        assert_abs_diff_eq!(p, (-v).exp() / (1.0 + (-v).exp()), epsilon = 1e-15);
        assert!(matches!(hit_before_return(&t, ids[1], NodeId::ROOT), Err(Error::Ancestry { .. })));
    }

    #[test]
    fn oracle_matches_on_random_trees() {
        let law = Arc::new(EnvironmentLaw::reference());
        let mut rng = stream(1, "oracle", 0);
        let mut worst: f64 = 0.0;
        for i in 0..30 {
            let depth = rng.random_range(1..=7);
            let t = MarkedTree::generate(law.clone(), depth, 1000 + i).unwrap();
            let x = NodeId(rng.random_range(1..t.len() as u32));
            let z = t.ancestor(x, rng.random_range(0..=t.generation(x)));
            let a = hit_before_return(&t, z, x).unwrap();
            let b = hit_before_return_oracle(&t, z, x).unwrap();
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn gamblers_ruin_on_a_path() {
        let disps = [0.3, -0.5, 0.2, 0.9, -0.1];
        let (t, ids) = TreeBuilder::path(&disps);
        // birth–death chain: P_z(hit x before e*) = Σ_{w≤z} r_w / Σ_{w≤x} r_w, r_w = e^{V(w)}
        let r: Vec<f64> = ids.iter().map(|&w| t.potential(w).exp()).collect();
        for zi in 0..ids.len() {
            let expected = r[..=zi].iter().sum::<f64>() / r.iter().sum::<f64>();
            let x = *ids.last().unwrap();
            assert_abs_diff_eq!(hit_before_return(&t, ids[zi], x).unwrap(), expected, epsilon = 1e-14);
            assert_abs_diff_eq!(hit_before_return_oracle(&t, ids[zi], x).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn iterative_solver_agrees_with_dense() {
        let law = Arc::new(EnvironmentLaw::reference());
        let t = MarkedTree::generate(law, 5, 77).unwrap();
        let x = *t.level(5).last().unwrap();
        let index = AncestryIndex::new(&t);
        let _ = index;
        let dense = hit_before_return_oracle(&t, NodeId::ROOT, x).unwrap();
        // same system through the iterative path
        let rows_rhs = {
            let states: Vec<NodeId> = t.nodes().filter(|&u| u != x).collect();
            let mut slot = vec![usize::MAX; t.len()];
            for (i, &u) in states.iter().enumerate() {
                slot[u.index()] = i;
            }
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            for &u in &states {
                let mut nb: Vec<(Option<NodeId>, f64)> = vec![(t.parent(u), 1.0)];
                for c in t.children(u) {
                    nb.push((Some(c), (t.potential(u) - t.potential(c)).exp()));
                }
                let tot: f64 = nb.iter().map(|p| p.1).sum();
                let mut row = Vec::new();
                let mut b = 0.0;
                for (v, w) in nb {
                    match v {
                        None => {}
                        Some(v) if v == x => b += w / tot,
                        Some(v) => row.push((slot[v.index()], w / tot)),
                    }
                }
                rows.push(row);
                rhs.push(b);
            }
            (rows, rhs)
        };
        let h = solve_iterative(&rows_rhs.0, &rows_rhs.1).unwrap();
        assert_abs_diff_eq!(h[0], dense, epsilon = 1e-10);
    }

    #[test]
    fn strong_markov_factorisation_and_monotonicity() {
        let law = Arc::new(EnvironmentLaw::reference());
        let t = MarkedTree::generate(law, 8, 5).unwrap();
        for &x in t.level(8).iter().take(20) {
            let path = t.path(x);
            for w in path.windows(2) {
                assert!(hit_before_return(&t, NodeId::ROOT, w[1]).unwrap() < hit_before_return(&t, NodeId::ROOT, w[0]).unwrap());
            }
            for &z in &path[1..path.len() - 1] {
                let lhs = hit_before_return(&t, NodeId::ROOT, x).unwrap();
                let rhs = hit_before_return(&t, NodeId::ROOT, z).unwrap() * hit_before_return(&t, z, x).unwrap();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-14 * lhs.max(1e-300));
            }
        }
    }

    #[test]
    fn quenched_mean_two_vertices() {
        let mut b = TreeBuilder::new();
        let uv = b.children(NodeId::ROOT, &[0.4, -0.3]);
        let t = b.build();
        let one = |_: &MarkedTree, _: &[NodeId]| 1.0;
        let s = 7;
        let got = quenched_mean_quasi_independent(&t, &uv, s, 2, u32::MAX, one, 1e9).unwrap();
        let term = |x: NodeId| (-t.potential(x)).exp() / t.conductance_h(x);
        let expected = 2.0 * (s * (s - 1)) as f64 * term(uv[0]) * term(uv[1]);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
        assert_eq!(quenched_mean_quasi_independent(&t, &uv, 1, 2, u32::MAX, one, 1e9).unwrap(), 0.0);
        assert!(matches!(
            quenched_mean_quasi_independent(&t, &uv, 5, 2, u32::MAX, one, 1.0),
            Err(Error::CombinatorialCap { .. })
        ));
    }

    #[test]
    fn phi_basics() {
        let law = EnvironmentLaw::reference();
        let opts = PhiOptions { replicas: 10, ..PhiOptions::default() };
        let root = phi(&law, 0, 1.0, opts).unwrap();
        assert_eq!(root.mean, 1.0);
        let opts = PhiOptions { replicas: 2000, seed: 4, ..PhiOptions::default() };
        let vals: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&r| phi(&law, 6, r, opts).unwrap().mean).collect();
        // same trees for every r (common seed): pathwise non-increasing
        assert!(vals.windows(2).all(|w| w[1] <= w[0]), "{vals:?}");
    }
}
