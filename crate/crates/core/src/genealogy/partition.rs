//! Set partitions of {1, …, k} and increasing chains of them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest k for which collections are enumerated.
pub const MAX_ENUMERATION_K: usize = 6;

/// A partition of {1, …, k}, stored as a restricted growth string: element
/// i (0-based) lies in block `labels[i]`, blocks numbered by least element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<u8>,
    blocks: u8,
}

impl Partition {
    /// Canonical partition grouping equal keys.
    pub fn from_keys<T: PartialEq>(keys: &[T]) -> Self {
        let mut labels = Vec::with_capacity(keys.len());
        let mut reps: Vec<&T> = Vec::new();
        for key in keys {
            let label = match reps.iter().position(|r| *r == key) {
                Some(p) => p,
                None => {
                    reps.push(key);
                    reps.len() - 1
                }
            };
            labels.push(label as u8);
        }
        Partition { labels, blocks: reps.len() as u8 }
    }

    /// From blocks of 1-based elements, in any order.
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let k: usize = blocks.iter().map(Vec::len).sum();
        let mut owner = vec![usize::MAX; k];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Partition("empty block".into()));
            }
            for &e in block {
                if e == 0 || e > k {
                    return Err(Error::Partition(format!("element {e} outside 1..={k}")));
                }
                if owner[e - 1] != usize::MAX {
                    return Err(Error::Partition(format!("element {e} appears twice")));
                }
                owner[e - 1] = b;
            }
        }
        if k > u8::MAX as usize {
            return Err(Error::Partition("ground set too large".into()));
        }
        Ok(Self::from_keys(&owner))
    }

    pub fn one_block(k: usize) -> Self {
        Partition { labels: vec![0; k], blocks: u8::from(k > 0) }
    }

    pub fn singletons(k: usize) -> Self {
        Partition { labels: (0..k as u8).collect(), blocks: k as u8 }
    }

    /// Size of the ground set.
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    /// |π|.
    pub fn block_count(&self) -> usize {
        usize::from(self.blocks)
    }

    /// 0-based block index of the 1-based element `e`.
    pub fn block_of(&self, e: usize) -> usize {
        usize::from(self.labels[e - 1])
    }

    /// Block labels of the 0-based elements.
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Blocks of 1-based elements, each sorted, ordered by least element.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.block_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[usize::from(l)].push(i + 1);
        }
        out
    }

    pub fn is_singletons(&self) -> bool {
        self.block_count() == self.k()
    }

    /// Every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.k() != coarser.k() {
            return false;
        }
        let mut image = vec![u8::MAX; self.block_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            let c = coarser.labels[i];
            let slot = &mut image[usize::from(l)];
            if *slot == u8::MAX {
                *slot = c;
            } else if *slot != c {
                return false;
            }
        }
        true
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, e) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.blocks().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let blocks = Vec::<Vec<usize>>::deserialize(d)?;
        Partition::new(blocks).map_err(serde::de::Error::custom)
    }
}

/// Refinement data of one block B_j of Ξ_{p−1}: b_{p−1}(B_j) sub-blocks in Ξ_p
/// with sizes β^{p−1}_j (ordered by least element).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSplit {
    pub block: Vec<usize>,
    pub count: usize,
    pub beta: Vec<u32>,
}

/// Chain Ξ_0 = {{1..k}}, …, Ξ_d = singletons with strictly more blocks at each
/// level, each level refining the previous one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct IncreasingCollection {
    levels: Vec<Partition>,
}

impl IncreasingCollection {
    pub fn new(levels: Vec<Partition>) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(Error::Partition("collection has no levels".into()));
        };
        let k = first.k();
        if first.block_count() != 1.min(k) {
            return Err(Error::Partition(format!("first level {first} is not the one-block partition")));
        }
        if !levels.last().unwrap().is_singletons() {
            return Err(Error::Partition("last level is not the singleton partition".into()));
        }
        for w in levels.windows(2) {
            if w[1].k() != k {
                return Err(Error::Partition("levels over different ground sets".into()));
            }
            if w[1].block_count() <= w[0].block_count() {
                return Err(Error::Partition(format!("block count does not increase from {} to {}", w[0], w[1])));
            }
            if !w[1].refines(&w[0]) {
                return Err(Error::Partition(format!("{} does not refine {}", w[1], w[0])));
            }
        }
        Ok(IncreasingCollection { levels })
    }

    /// From levels given as 1-based blocks.
    pub fn from_blocks(levels: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        Self::new(levels.into_iter().map(Partition::new).collect::<Result<_>>()?)
    }

    pub fn k(&self) -> usize {
        self.levels[0].k()
    }

    /// Number of refinement steps d (levels are Ξ_0..Ξ_d).
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &Partition {
        &self.levels[i]
    }

    /// Refinement data of every block of Ξ_{p−1} into Ξ_p, for 1 ≤ p ≤ d.
    pub fn splits(&self, p: usize) -> Vec<BlockSplit> {
        let (coarse, fine) = (&self.levels[p - 1], &self.levels[p]);
        let fine_blocks = fine.blocks();
        coarse
            .blocks()
            .into_iter()
            .map(|block| {
                let c = coarse.block_of(block[0]);
                let beta: Vec<u32> = fine_blocks
                    .iter()
                    .filter(|fb| coarse.block_of(fb[0]) == c)
                    .map(|fb| fb.len() as u32)
                    .collect();
                BlockSplit { count: beta.len(), beta, block }
            })
            .collect()
    }

    /// Drop the last level: the new ground set indexes the blocks of Ξ_{d−1}
    /// (ordered by least element) and each Ξ_i becomes the partition of those
    /// indices induced by its blocks.
    pub fn reduce(&self) -> Result<Self> {
        let d = self.depth();
        if d < 1 {
            return Err(Error::Partition("cannot reduce a collection without refinement steps".into()));
        }
        let last = &self.levels[d - 1];
        let new_k = last.block_count();
        let reps: Vec<usize> = last.blocks().iter().map(|b| b[0]).collect();
        let levels: Vec<Partition> = self.levels[..d]
            .iter()
            .map(|pi| Partition::from_keys(&reps.iter().map(|&e| pi.block_of(e)).collect::<Vec<_>>()))
            .collect();
        debug_assert_eq!(levels.last().map(Partition::block_count), Some(new_k));
        Self::new(levels)
    }
}

impl<'de> Deserialize<'de> for IncreasingCollection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let levels = Vec::<Partition>::deserialize(d)?;
        IncreasingCollection::new(levels).map_err(serde::de::Error::custom)
    }
}

/// Möbius weight μ(π) = ∏_B (−1)^{|B|−1} (|B|−1)! of the partition lattice,
/// so that Σ_π μ(π) ∏_{B∈π} 1{all positions in B agree} counts injective assignments.
pub fn mobius_weight(p: &Partition) -> i64 {
    p.blocks()
        .iter()
        .map(|b| {
            let f: i64 = (1..b.len() as i64).product();
            if b.len() % 2 == 0 { -f } else { f }
        })
        .product()
}

/// Every partition of {1..k}, in lexicographic order of restricted growth strings.
pub fn set_partitions(k: usize) -> Vec<Partition> {
    fn rec(i: usize, k: usize, max: u8, labels: &mut Vec<u8>, out: &mut Vec<Partition>) {
        if i == k {
            out.push(Partition { labels: labels.clone(), blocks: if k == 0 { 0 } else { max + 1 } });
            return;
        }
        let top = if i == 0 { 0 } else { max + 1 };
        for l in 0..=top {
            labels.push(l);
            rec(i + 1, k, max.max(l), labels, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Strict refinements of `p` (more blocks, each block a union of new blocks).
pub fn strict_refinements(p: &Partition) -> Vec<Partition> {
    let blocks = p.blocks();
    let per_block: Vec<Vec<Partition>> = blocks.iter().map(|b| set_partitions(b.len())).collect();
    let mut out = Vec::new();
    let mut choice = vec![0usize; blocks.len()];
    loop {
        // Assemble the refinement from the chosen sub-partitions.
        let mut keys = vec![(0usize, 0u8); p.k()];
        for (bi, block) in blocks.iter().enumerate() {
            let sub = &per_block[bi][choice[bi]];
            for (j, &e) in block.iter().enumerate() {
                keys[e - 1] = (bi, sub.labels[j]);
            }
        }
        let q = Partition::from_keys(&keys);
        if q.block_count() > p.block_count() {
            out.push(q);
        }
        let mut i = 0;
        loop {
            if i == blocks.len() {
                out.sort();
                return out;
            }
            choice[i] += 1;
            if choice[i] < per_block[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// All increasing collections on {1..k}; `depth` restricts the number of steps.
pub fn increasing_collections(k: usize, depth: Option<usize>) -> Result<Vec<IncreasingCollection>> {
    if k > MAX_ENUMERATION_K {
        return Err(Error::InvalidArgument(format!("enumeration supports k ≤ {MAX_ENUMERATION_K}, got {k}")));
    }
    fn rec(chain: &mut Vec<Partition>, depth: Option<usize>, out: &mut Vec<IncreasingCollection>) {
        let last = chain.last().unwrap();
        if last.is_singletons() {
            if depth.is_none_or(|d| chain.len() - 1 == d) {
                out.push(IncreasingCollection { levels: chain.clone() });
            }
            return;
        }
        if depth.is_some_and(|d| chain.len() > d) {
            return;
        }
        for q in strict_refinements(last) {
            chain.push(q);
            rec(chain, depth, out);
            chain.pop();
        }
    }
    let mut out = Vec::new();
    if k >= 2 {
        rec(&mut vec![Partition::one_block(k)], depth, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(blocks: &[&[usize]]) -> Partition {
        Partition::new(blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    #[test]
    fn canonical_ordering() {
        let a = p(&[&[2, 4], &[3, 1]]);
        assert_eq!(a.blocks(), vec![vec![1, 3], vec![2, 4]]);
        assert_eq!(a.to_string(), "{{1,3},{2,4}}");
        assert!(Partition::new(vec![vec![1, 1]]).is_err());
        assert!(Partition::new(vec![vec![1, 3]]).is_err());
    }

    #[test]
    fn bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203];
        for (k, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(k).len(), b);
        }
    }

    #[test]
    fn mobius_counts_injections() {
        // Σ_π μ(π) m^{|π|} = m(m−1)⋯(m−k+1)
        for k in 1..=5 {
            for m in 0..7i64 {
                let total: i64 = set_partitions(k).iter().map(|p| mobius_weight(p) * m.pow(p.block_count() as u32)).sum();
                let falling: i64 = (0..k as i64).map(|i| m - i).product();
                assert_eq!(total, falling);
            }
        }
    }

    #[test]
    fn collection_validation() {
        let ok = IncreasingCollection::from_blocks(vec![vec![vec![1, 2, 3]], vec![vec![1, 2], vec![3]], vec![vec![1], vec![2], vec![3]]]);
        assert!(ok.is_ok());
        // wrong ordering of levels
        let bad = IncreasingCollection::from_blocks(vec![vec![vec![1], vec![2], vec![3]], vec![vec![1, 2, 3]]]);
        assert!(bad.is_err());
        // not a refinement
        let bad = IncreasingCollection::from_blocks(vec![
            vec![vec![1, 2, 3, 4]],
            vec![vec![1, 2], vec![3, 4]],
            vec![vec![1, 3], vec![2], vec![4]],
            vec![vec![1], vec![2], vec![3], vec![4]],
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn worked_reduction_example() {
        let pi = IncreasingCollection::from_blocks(vec![
            vec![vec![1, 2, 3, 4, 5]],
            vec![vec![1, 3, 4], vec![2, 5]],
            vec![vec![1, 3], vec![2, 5], vec![4]],
            vec![vec![1, 3], vec![2], vec![4], vec![5]],
            vec![vec![1], vec![2], vec![3], vec![4], vec![5]],
        ])
        .unwrap();
        let r = pi.reduce().unwrap();
        let expected = IncreasingCollection::from_blocks(vec![
            vec![vec![1, 2, 3, 4]],
            vec![vec![1, 3], vec![2, 4]],
            vec![vec![1], vec![2, 4], vec![3]],
            vec![vec![1], vec![2], vec![3], vec![4]],
        ])
        .unwrap();
        assert_eq!(r, expected);
    }

    #[test]
    fn pair_collection_reduces_to_trivial() {
        let pi = IncreasingCollection::from_blocks(vec![vec![vec![1, 2]], vec![vec![1], vec![2]]]).unwrap();
        let r = pi.reduce().unwrap();
        assert_eq!(r.k(), 1);
        assert_eq!(r.depth(), 0);
    }

    #[test]
    fn collection_counts() {
        // k = 2: one chain; k = 3: one-step + three two-step chains
        assert_eq!(increasing_collections(2, None).unwrap().len(), 1);
        assert_eq!(increasing_collections(3, None).unwrap().len(), 4);
        assert_eq!(increasing_collections(3, Some(2)).unwrap().len(), 3);
        // ordered set partition chains: 1, 1, 4, 32, 436, 9012 (total preorders minus…)
        // checked against brute force over sequences of set partitions
        for k in 2..=4 {
            let parts = set_partitions(k);
            let mut brute = 0usize;
            fn count(cur: &Partition, parts: &[Partition]) -> usize {
                if cur.is_singletons() {
                    return 1;
                }
                parts
                    .iter()
                    .filter(|q| q.block_count() > cur.block_count() && q.refines(cur))
                    .map(|q| count(q, parts))
                    .sum()
            }
            brute += count(&Partition::one_block(k), &parts);
            assert_eq!(increasing_collections(k, None).unwrap().len(), brute);
        }
        assert!(increasing_collections(7, None).is_err());
    }

    #[test]
    fn beta_profiles_example() {
        // π_1 = {{1,3},{2,4}}, then {2,4} splits, then {1,3} splits
        let pi = IncreasingCollection::from_blocks(vec![
            vec![vec![1, 2, 3, 4]],
            vec![vec![1, 3], vec![2, 4]],
            vec![vec![1, 3], vec![2], vec![4]],
            vec![vec![1], vec![2], vec![3], vec![4]],
        ])
        .unwrap();
        let s1 = pi.splits(1);
        assert_eq!(s1.len(), 1);
        assert_eq!((s1[0].count, s1[0].beta.clone()), (2, vec![2, 2]));
        let s2 = pi.splits(2);
        assert_eq!((s2[0].count, s2[0].beta.clone()), (1, vec![2]));
        assert_eq!((s2[1].count, s2[1].beta.clone()), (2, vec![1, 1]));
    }

    fn arb_collection() -> impl Strategy<Value = IncreasingCollection> {
        (2usize..=6, any::<u64>()).prop_map(|(k, seed)| {
            let mut s = seed;
            let mut levels = vec![Partition::one_block(k)];
            while !levels.last().unwrap().is_singletons() {
                let options = strict_refinements(levels.last().unwrap());
                s = crate::rng::mix64(s);
                levels.push(options[(s % options.len() as u64) as usize].clone());
            }
            IncreasingCollection::new(levels).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn reduction_and_profile_invariants(c in arb_collection()) {
            for p in 1..=c.depth() {
                for split in c.splits(p) {
                    prop_assert_eq!(split.beta.iter().sum::<u32>() as usize, split.block.len());
                    prop_assert_eq!(split.count, split.beta.len());
                }
            }
            let r = c.reduce().unwrap();
            prop_assert_eq!(r.depth() + 1, c.depth());
            for i in 0..r.levels().len() {
                prop_assert_eq!(r.level(i).block_count(), c.level(i).block_count());
            }
            for i in 1..r.levels().len() {
                let a: Vec<usize> = c.splits(i).iter().map(|s| s.count).collect();
                let b: Vec<usize> = r.splits(i).iter().map(|s| s.count).collect();
                prop_assert_eq!(a, b);
            }
        }
    }
}
