//! Genealogies of vertex tuples: split generations, partition processes,
//! coalescent times, Υ-membership and the constraint library.
//!
//! Tuple positions are 1-based in every partition-valued result, matching the
//! labelling x^{(1)}, …, x^{(k)}.

mod constraint;
mod partition;

use serde::{Deserialize, Serialize};

pub use constraint::{hereditary_check, Constraint, HereditaryReport};
pub use partition::{
    increasing_collections, mobius_weight, set_partitions, strict_refinements, BlockSplit, IncreasingCollection, Partition,
    MAX_ENUMERATION_K,
};

use crate::error::{Error, Result};
use crate::tree::{MarkedTree, NodeId};

/// Split times t_1 < … < t_d together with the chain Ξ_0, …, Ξ_d.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenealogySignature {
    #[serde(rename = "t")]
    pub times: Vec<u32>,
    #[serde(rename = "xi")]
    pub collection: IncreasingCollection,
}

impl GenealogySignature {
    pub fn new(times: Vec<u32>, collection: IncreasingCollection) -> Result<Self> {
        let sig = GenealogySignature { times, collection };
        sig.validate()?;
        Ok(sig)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.collection.depth() {
            return Err(Error::Signature(format!(
                "{} split times for a collection with {} refinement steps",
                self.times.len(),
                self.collection.depth()
            )));
        }
        if self.times.first().is_some_and(|&t| t == 0) {
            return Err(Error::Signature("split times start at generation 1".into()));
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Signature(format!("split times {:?} are not strictly increasing", self.times)));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.collection.k()
    }

    /// Number of coalescent times 𝒥.
    pub fn count(&self) -> usize {
        self.times.len()
    }

    /// The last time, which equals S^k(x) for a signature read off a tuple.
    pub fn first_full_split(&self) -> u32 {
        self.times.last().copied().unwrap_or(1)
    }
}

/// Every signature on {1..k} whose times do not exceed `max_time`.
pub fn signatures(k: usize, max_time: u32) -> Result<Vec<GenealogySignature>> {
    fn choose(from: u32, max: u32, len: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for t in from..=max {
            cur.push(t);
            choose(t + 1, max, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for collection in increasing_collections(k, None)? {
        let mut times = Vec::new();
        choose(1, max_time, collection.depth(), &mut Vec::new(), &mut times);
        for t in times {
            out.push(GenealogySignature { times: t, collection: collection.clone() });
        }
    }
    Ok(out)
}

fn check_delta(tree: &MarkedTree, x: &[NodeId]) -> Result<()> {
    for (i, &a) in x.iter().enumerate() {
        if !tree.contains(a) {
            return Err(Error::NotInDelta(format!("{a} is not a stored vertex")));
        }
        for &b in &x[..i] {
            if tree.is_ancestor_or_equal(a, b) || tree.is_ancestor_or_equal(b, a) {
                return Err(Error::NotInDelta(format!("{a} and {b} are equal or ancestrally related")));
            }
        }
    }
    Ok(())
}

/// S^k(x) = 1 + max_{i≠j} |x^{(i)} ∧ x^{(j)}|, for x ∈ Δ^k.
pub fn first_full_split(tree: &MarkedTree, x: &[NodeId]) -> Result<u32> {
    check_delta(tree, x)?;
    Ok(first_full_split_unchecked(tree, x))
}

/// [`first_full_split`] without the Δ^k membership check.
pub fn first_full_split_unchecked(tree: &MarkedTree, x: &[NodeId]) -> u32 {
    let mut max = 0;
    for (i, &a) in x.iter().enumerate() {
        for &b in &x[..i] {
            max = max.max(tree.generation(tree.mrca(a, b)));
        }
    }
    max + 1
}

/// π_m(x): i ∼ j iff x^{(i)} and x^{(j)} have the same ancestor in generation m,
/// where a vertex below generation m is represented by its own virtual leaf.
pub fn partition_process(tree: &MarkedTree, x: &[NodeId], m: u32) -> Partition {
    let keys: Vec<_> = x.iter().enumerate().map(|(slot, &v)| tree.ancestor_at(v, m, slot)).collect();
    Partition::from_keys(&keys)
}

/// Whether x ∈ Υ_{m,π}: positions in a common block share their generation-m
/// ancestor and positions in different blocks do not.
pub fn upsilon_member(tree: &MarkedTree, x: &[NodeId], m: u32, pi: &Partition) -> bool {
    pi.k() == x.len() && partition_process(tree, x, m) == *pi
}

/// Pairwise |x^{(i)} ∧ x^{(j)}| as a dense k×k matrix (diagonal unused).
fn mrca_generations(tree: &MarkedTree, x: &[NodeId]) -> Vec<u32> {
    let k = x.len();
    let mut g = vec![u32::MAX; k * k];
    for i in 0..k {
        for j in 0..i {
            let m = tree.generation(tree.mrca(x[i], x[j]));
            g[i * k + j] = m;
            g[j * k + i] = m;
        }
    }
    g
}

/// Coalescent times of x ∈ Δ^k (k ≥ 2): the generations at which the
/// partition process gains blocks, with the partitions reached there.
pub fn coalescent_times(tree: &MarkedTree, x: &[NodeId]) -> Result<GenealogySignature> {
    let k = x.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("coalescent times need k ≥ 2, got {k}")));
    }
    check_delta(tree, x)?;
    let g = mrca_generations(tree, x);
    // For tuples in Δ^k, i ∼_m j iff |x^{(i)} ∧ x^{(j)}| ≥ m, so the partition
    // can only change just above a pairwise MRCA generation.
    let mut candidates: Vec<u32> = g.iter().copied().filter(|&m| m != u32::MAX).map(|m| m + 1).collect();
    candidates.sort_unstable();
    candidates.dedup();
    let mut times = Vec::new();
    let mut levels = vec![Partition::one_block(k)];
    for m in candidates {
        let pi = partition_process(tree, x, m);
        if pi.block_count() > levels.last().unwrap().block_count() {
            times.push(m);
            levels.push(pi);
        }
    }
    GenealogySignature::new(times, IncreasingCollection::new(levels)?)
}

/// f^d_{t,Ξ}(x) = ∏_i 1{x ∈ Υ_{t_i−1,Ξ_{i−1}} ∩ Υ_{t_i,Ξ_i}}.
pub fn genealogy_indicator(tree: &MarkedTree, x: &[NodeId], sig: &GenealogySignature) -> Result<bool> {
    sig.validate()?;
    if sig.k() != x.len() {
        return Err(Error::Signature(format!("signature on {} positions applied to a {}-tuple", sig.k(), x.len())));
    }
    Ok(genealogy_indicator_unchecked(tree, x, sig))
}

pub(crate) fn genealogy_indicator_unchecked(tree: &MarkedTree, x: &[NodeId], sig: &GenealogySignature) -> bool {
    let levels = sig.collection.levels();
    sig.times.iter().enumerate().all(|(i, &t)| {
        upsilon_member(tree, x, t - 1, &levels[i]) && upsilon_member(tree, x, t, &levels[i + 1])
    })
}

/// Lists the split times of x ∈ Δ^k (k ≥ 2) without building partitions.
pub fn split_times(tree: &MarkedTree, x: &[NodeId]) -> Vec<u32> {
    let k = x.len();
    let g = mrca_generations(tree, x);
    let mut candidates: Vec<u32> = g.iter().copied().filter(|&m| m != u32::MAX).map(|m| m + 1).collect();
    candidates.sort_unstable();
    candidates.dedup();
    let mut times = Vec::new();
    let mut blocks = 1;
    for m in candidates {
        let keys: Vec<u32> = (0..k)
            .map(|i| (0..k).find(|&j| j == i || g[i * k + j] >= m).unwrap() as u32)
            .collect();
        let count = {
            let mut seen: Vec<u32> = keys.clone();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        };
        if count > blocks {
            times.push(m);
            blocks = count;
        }
    }
    times
}
