//! Closed-form limit constants for genealogies of k-tuples, and the desk-scale
//! harness comparing Monte Carlo statistics of the walk with their limits.

mod desk;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use desk::{
    collect_samples, limit_report, limit_report_from_samples, local_time_law_probe, BandPolicy, DeskConfig, GridRow, LimitCheck, LimitReport,
    LocalTimeReport, LocalTimeRow, ReplicaSample, Verdict,
};

use crate::environment::{check_assumptions, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::genealogy::{signatures, Constraint, GenealogySignature, IncreasingCollection, MAX_ENUMERATION_K};
use crate::par::{map_indexed, Execution};
use crate::range::{weighted_range_a_l_exact, DEFAULT_TUPLE_CAP};
use crate::rng::derive_seed;
use crate::stats::{Estimate, ExactSum};
use crate::tree::MarkedTree;

/// Factor carried by the segment from the root to the first split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prefactor {
    /// e^{(s_1−1)ψ(k)}: the k lines share s_1 − 1 edges before splitting.
    #[default]
    RootSegment,
    /// e^{ψ(k)} regardless of s_1.
    Literal,
}

fn require(law: &EnvironmentLaw, k: usize) -> Result<()> {
    if k > MAX_ENUMERATION_K {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {MAX_ENUMERATION_K}")));
    }
    let report = check_assumptions(law, k)?;
    for name in ["psi1_zero", "kappa_gt_2k", "joint_moments"] {
        let c = report.check(name).expect("standard check");
        if !c.passed {
            return Err(Error::Assumption(format!("{} fails (value {})", c.detail, c.value)));
        }
    }
    Ok(())
}

/// E[𝒜^k_∞(f^ℓ_{s,Π})], for laws with ψ(1) = 0 and κ > 2k.
pub fn esp_partition_law(
    law: &EnvironmentLaw,
    s: &[u32],
    pi: &IncreasingCollection,
    prefactor: Prefactor,
) -> Result<f64> {
    require(law, pi.k())?;
    esp_partition_law_unchecked(law, s, pi, prefactor)
}

/// The product formula of [`esp_partition_law`] without the moment condition:
///
/// pre · ∏_{i=1}^{ℓ} ∏_{B∈Ξ_{i−1}} c_{b(B)}(β(B)) · ∏_{i=1}^{ℓ−1} ∏_{B∈Ξ_i, |B|≥2} e^{(s_{i+1}−s_i−1)ψ(|B|)}.
pub fn esp_partition_law_unchecked(
    law: &EnvironmentLaw,
    s: &[u32],
    pi: &IncreasingCollection,
    prefactor: Prefactor,
) -> Result<f64> {
    GenealogySignature::new(s.to_vec(), pi.clone())?;
    let k = pi.k() as f64;
    let mut log_value = match prefactor {
        Prefactor::RootSegment => f64::from(s[0] - 1) * law.log_laplace(k)?,
        Prefactor::Literal => law.log_laplace(k)?,
    };
    let mut value = 1.0;
    for p in 1..=pi.depth() {
        for split in pi.splits(p) {
            value *= law.moment_c_j(&split.beta)?;
        }
    }
    for i in 1..pi.depth() {
        let gap = f64::from(s[i] - s[i - 1] - 1);
        for block in pi.level(i).blocks() {
            if block.len() >= 2 {
                log_value += gap * law.log_laplace(block.len() as f64)?;
            }
        }
    }
    Ok(value * log_value.exp())
}

/// Monte Carlo mean of 𝒜^k_{s_ℓ}(f^ℓ_{s,Π}) = Σ_{x∈Δ^k_{s_ℓ}} f^ℓ_{s,Π}(x) e^{−Σ V(x^{(i)})}
/// over independent trees of depth s_ℓ. Extinct trees contribute 0, so the
/// estimate is of the unconditioned mean.
pub fn estimate_esp_partition(
    law: &Arc<EnvironmentLaw>,
    s: &[u32],
    pi: &IncreasingCollection,
    replicas: usize,
    seed: u64,
    exec: Execution,
) -> Result<Estimate> {
    require(law, pi.k())?;
    let sig = GenealogySignature::new(s.to_vec(), pi.clone())?;
    let depth = sig.first_full_split();
    let samples = map_indexed(exec, replicas, |r| -> Result<f64> {
        let tree_seed = derive_seed(seed, "partition-law", r as u64);
        let mut tree = match MarkedTree::generate_with(law.clone(), depth, tree_seed, 50_000_000, 0) {
            Ok(t) => t,
            Err(Error::EmptySupport(_)) => return Ok(0.0),
            Err(e) => return Err(e),
        };
        Ok(genealogy_sum(&mut tree, &sig)?.value())
    });
    let samples: Vec<f64> = samples.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&samples))
}

/// 𝒜^k_l(f^ℓ_{s,Π}) at l = s_ℓ on one tree. Same terms as
/// [`weighted_range_a_l_exact`] with the genealogy constraint, but membership
/// is pairwise (same ancestor at t − 1 and at t for every split time t), so
/// partial tuples are pruned as soon as one pair disagrees.
fn genealogy_sum(tree: &mut MarkedTree, sig: &GenealogySignature) -> Result<ExactSum> {
    let depth = sig.first_full_split();
    let k = sig.k();
    tree.complete_level(depth)?;
    let tree = &*tree;
    let level = tree.level(depth);
    let mut acc = ExactSum::new();
    if level.len() < k {
        return Ok(acc);
    }
    // (generation, block labels required there) for each constrained time.
    let levels = sig.collection.levels();
    let checks: Vec<(usize, &[u8])> = sig
        .times
        .iter()
        .enumerate()
        .flat_map(|(i, &t)| [(t as usize - 1, levels[i].labels()), (t as usize, levels[i + 1].labels())])
        .collect();
    let stride = depth as usize + 1;
    let ancestors: Vec<u32> = level.iter().flat_map(|&x| tree.path(x).into_iter().map(|u| u.0)).collect();
    let potentials: Vec<f64> = level.iter().map(|&x| tree.potential(x)).collect();
    let compatible = |a: usize, i: usize, b: usize, j: usize| {
        checks.iter().all(|&(m, labels)| {
            (ancestors[a * stride + m] == ancestors[b * stride + m]) == (labels[i] == labels[j])
        })
    };
    fn rec(
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        potential: f64,
        compatible: &dyn Fn(usize, usize, usize, usize) -> bool,
        potentials: &[f64],
        acc: &mut ExactSum,
    ) {
        let j = cur.len();
        if j == k {
            acc.add((-potential).exp());
            return;
        }
        for b in 0..n {
            if cur.iter().enumerate().all(|(i, &a)| a != b && compatible(a, i, b, j)) {
                cur.push(b);
                rec(n, k, cur, potential + potentials[b], compatible, potentials, acc);
                cur.pop();
            }
        }
    }
    rec(level.len(), k, &mut Vec::with_capacity(k), 0.0, &compatible, &potentials, &mut acc);
    Ok(acc)
}

/// Both sides of the finite-depth summation identities on one tree:
/// Σ_{signatures, s_ℓ ≤ l} 𝒜^k_l(f^ℓ_{s,Ξ}) against 𝒜^k_l(1), and, for each
/// 𝔰 ≤ l, Σ_{s_ℓ ≤ 𝔰} 𝒜^k_l(F^ℓ_s) against 𝒜^k_l(1_{𝒞^k_𝔰}). Partial sums
/// are merged exactly, so equal multisets of terms give bitwise-equal values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub k: usize,
    pub level: u32,
    pub signature_sum: f64,
    pub total: f64,
    /// (𝔰, Σ_s 𝒜^k_l(F^ℓ_s), 𝒜^k_l(1_{𝒞^k_𝔰})).
    pub split_sums: Vec<(u32, f64, f64)>,
}

impl IdentityCheck {
    pub fn exact(&self) -> bool {
        self.signature_sum.to_bits() == self.total.to_bits()
            && self.split_sums.iter().all(|(_, a, b)| a.to_bits() == b.to_bits())
    }
}

pub fn summation_identities(tree: &mut MarkedTree, k: usize, level: u32) -> Result<IdentityCheck> {
    let beta = vec![1.0; k];
    let cap = DEFAULT_TUPLE_CAP;
    let total = weighted_range_a_l_exact(tree, k, level, &Constraint::One, &beta, cap)?.value();
    let mut by_signature = ExactSum::new();
    let mut by_times: Vec<(Vec<u32>, ExactSum)> = Vec::new();
    for sig in signatures(k, level)? {
        let part = weighted_range_a_l_exact(tree, k, level, &Constraint::Genealogy(sig.clone()), &beta, cap)?;
        by_signature.merge(&part);
        match by_times.iter_mut().find(|(t, _)| *t == sig.times) {
            Some((_, acc)) => acc.merge(&part),
            None => by_times.push((sig.times.clone(), part)),
        }
    }
    let mut split_sums = Vec::new();
    for cap_s in 1..=level {
        // F^ℓ_s is evaluated directly (not through its signatures) on the left.
        let mut lhs = ExactSum::new();
        for (times, _) in by_times.iter().filter(|(t, _)| *t.last().unwrap() <= cap_s) {
            lhs.merge(&weighted_range_a_l_exact(tree, k, level, &Constraint::SplitTimes(times.clone()), &beta, cap)?);
        }
        let rhs = weighted_range_a_l_exact(tree, k, level, &Constraint::f_m(cap_s), &beta, cap)?;
        split_sums.push((cap_s, lhs.value(), rhs.value()));
    }
    Ok(IdentityCheck { k, level, signature_sum: by_signature.value(), total, split_sums })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genealogy::{increasing_collections, Partition};
    use approx::assert_relative_eq;

    fn e0() -> EnvironmentLaw {
        EnvironmentLaw::reference()
    }

    fn coll(levels: Vec<Vec<Vec<usize>>>) -> IncreasingCollection {
        IncreasingCollection::from_blocks(levels).unwrap()
    }

    fn pair() -> IncreasingCollection {
        coll(vec![vec![vec![1, 2]], vec![vec![1], vec![2]]])
    }

    #[test]
    fn pruned_genealogy_sum_matches_brute_force() {
        let law = Arc::new(e0());
        for seed in 0..4 {
            for k in [2, 3] {
                for sig in signatures(k, 4).unwrap() {
                    let depth = sig.first_full_split();
                    let mut tree = MarkedTree::generate(law.clone(), depth, seed).unwrap();
                    let fast = genealogy_sum(&mut tree, &sig).unwrap().value();
                    let f = Constraint::Genealogy(sig);
                    let slow = weighted_range_a_l_exact(&mut tree, k, depth, &f, &vec![1.0; k], DEFAULT_TUPLE_CAP).unwrap();
                    assert_eq!(fast.to_bits(), slow.value().to_bits(), "seed {seed}, {}", f.id());
                }
            }
        }
    }

    #[test]
    fn pair_one_generation_is_c2() {
        let law = e0();
        let v = esp_partition_law(&law, &[1], &pair(), Prefactor::RootSegment).unwrap();
        assert_relative_eq!(v, law.moment_c_j(&[1, 1]).unwrap(), max_relative = 1e-14);
        assert_relative_eq!(v, 0.26691, max_relative = 1e-4);
        // s = (3): two shared edges
        let v3 = esp_partition_law(&law, &[3], &pair(), Prefactor::RootSegment).unwrap();
        assert_relative_eq!(v3, v * (2.0 * law.log_laplace(2.0).unwrap()).exp(), max_relative = 1e-14);
        let lit = esp_partition_law(&law, &[3], &pair(), Prefactor::Literal).unwrap();
        assert_relative_eq!(lit, v * law.log_laplace(2.0).unwrap().exp(), max_relative = 1e-14);
        // the two prefactors agree when s_1 = 2
        let a = esp_partition_law(&law, &[2], &pair(), Prefactor::RootSegment).unwrap();
        let b = esp_partition_law(&law, &[2], &pair(), Prefactor::Literal).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn four_tuple_examples() {
        let law = e0();
        let psi = |t: f64| law.log_laplace(t).unwrap();
        let c = |b: &[u32]| law.moment_c_j(b).unwrap();
        let first = coll(vec![
            vec![vec![1, 2, 3, 4]],
            vec![vec![1, 3], vec![2, 4]],
            vec![vec![1, 3], vec![2], vec![4]],
            vec![vec![1], vec![2], vec![3], vec![4]],
        ]);
        let second = coll(vec![
            vec![vec![1, 2, 3, 4]],
            vec![vec![1, 3, 4], vec![2]],
            vec![vec![1, 3], vec![2], vec![4]],
            vec![vec![1], vec![2], vec![3], vec![4]],
        ]);
        let t = [2u32, 4, 6];
        let (t2, t3) = (f64::from(t[1] - t[0] - 1), f64::from(t[2] - t[1] - 1));
        // κ ≈ 6.93 < 8: the checked version refuses k = 4
        assert!(matches!(esp_partition_law(&law, &t, &first, Prefactor::Literal), Err(Error::Assumption(_))));
        let a = esp_partition_law_unchecked(&law, &t, &first, Prefactor::Literal).unwrap();
        let expected_a = c(&[2]) * c(&[1, 1]).powi(2) * c(&[2, 2]) * (t3 * psi(2.0) + 2.0 * t2 * psi(2.0) + psi(4.0)).exp();
        assert_relative_eq!(a, expected_a, max_relative = 1e-13);
        let b = esp_partition_law_unchecked(&law, &t, &second, Prefactor::Literal).unwrap();
        let expected_b = c(&[3, 1]) * c(&[2, 1]) * c(&[1, 1]) * (t3 * psi(2.0) + t2 * psi(3.0) + psi(4.0)).exp();
        assert_relative_eq!(b, expected_b, max_relative = 1e-13);
        assert!((a - b).abs() > 1e-3 * a.max(b));
        // t_1 = 2 makes both prefactors coincide
        assert_eq!(a, esp_partition_law_unchecked(&law, &t, &first, Prefactor::RootSegment).unwrap());
    }

    #[test]
    fn invariant_under_relabelling() {
        let law = e0();
        for c in increasing_collections(3, None).unwrap() {
            let s: Vec<u32> = (1..=c.depth() as u32).map(|i| 2 * i).collect();
            let v = esp_partition_law(&law, &s, &c, Prefactor::RootSegment).unwrap();
            for perm in [[1usize, 0, 2], [2, 1, 0], [1, 2, 0]] {
                let levels: Vec<Partition> = c
                    .levels()
                    .iter()
                    .map(|p| Partition::from_keys(&(0..3).map(|i| p.labels()[perm[i]]).collect::<Vec<_>>()))
                    .collect();
                let relabelled = IncreasingCollection::new(levels).unwrap();
                let w = esp_partition_law(&law, &s, &relabelled, Prefactor::RootSegment).unwrap();
                assert_relative_eq!(v, w, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn signature_sum_at_one_generation_is_pair_moment() {
        // Σ over all pair signatures with s ≤ l of the closed form equals E[𝒜²_l(1)].
        let law = e0();
        let l = 4;
        let mut total = 0.0;
        for s in 1..=l {
            total += esp_partition_law(&law, &[s], &pair(), Prefactor::RootSegment).unwrap();
        }
        // E[𝒜²_l(1)] = Σ_{s=1}^{l} e^{(s−1)ψ(2)} c_2(1,1) e^{(l−s)ψ(1)}, with ψ(1) = 0.
        let psi2 = law.log_laplace(2.0).unwrap();
        let direct: f64 = (1..=l).map(|s| (f64::from(s - 1) * psi2).exp() * law.moment_c_j(&[1, 1]).unwrap()).sum();
        assert_relative_eq!(total, direct, max_relative = 1e-13);
    }

    #[test]
    fn estimator_matches_one_generation_moment() {
        let law = Arc::new(e0());
        let est = estimate_esp_partition(&law, &[1], &pair(), 20_000, 3, Execution::Parallel).unwrap();
        assert!(est.agrees_with_value(law.moment_c_j(&[1, 1]).unwrap(), 4.0), "{est:?}");
    }

    #[test]
    fn estimator_rejects_uncalibrated_law() {
        let law = Arc::new(EnvironmentLaw::deterministic(1, 0.5).unwrap());
        assert!(matches!(
            estimate_esp_partition(&law, &[1], &pair(), 10, 0, Execution::Sequential),
            Err(Error::Assumption(_))
        ));
    }

    #[test]
    fn identities_are_exact_on_small_trees() {
        let law = Arc::new(e0());
        for seed in 0..4 {
            let mut t = MarkedTree::generate(law.clone(), 5, 500 + seed).unwrap();
            for k in 2..=3 {
                for l in 1..=5 {
                    let check = summation_identities(&mut t, k, l).unwrap();
                    assert!(check.exact(), "{check:?}");
                }
            }
        }
    }
}
