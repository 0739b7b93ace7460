//! Tuple constraints f and their heredity generations.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{first_full_split_unchecked, genealogy_indicator_unchecked, split_times, GenealogySignature};
use crate::error::{Error, Result};
use crate::tree::{MarkedTree, NodeId};

type TupleFn = Arc<dyn Fn(&MarkedTree, &[NodeId]) -> f64 + Send + Sync>;

/// A functional f on k-tuples, tagged with the generation 𝔤 beyond which it
/// only depends on the generation-p ancestors of the tuple.
#[derive(Clone)]
pub enum Constraint {
    /// f ≡ 1.
    One,
    /// f_λ(x) = ∏_{i=2}^{k} 1{|x^{(i−1)} ∧ x^{(i)}| < λ_i}; entry i−2 holds λ_i,
    /// `None` standing for λ_i = ∞.
    Lambda(Vec<Option<u32>>),
    /// f_m(x) = 1{S^k(x) ≤ m}.
    SplitBy(u32),
    /// F^ℓ_s(x) = 1 iff the coalescent times of x are exactly s.
    SplitTimes(Vec<u32>),
    /// f^d_{t,Ξ}.
    Genealogy(GenealogySignature),
    Custom { id: String, heredity: u32, f: TupleFn },
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Constraint({})", self.id())
    }
}

impl Constraint {
    pub fn f_lambda(lambda: Vec<Option<u32>>) -> Self {
        Constraint::Lambda(lambda)
    }

    pub fn f_m(m: u32) -> Self {
        Constraint::SplitBy(m)
    }

    pub fn split_times(s: Vec<u32>) -> Result<Self> {
        if s.is_empty() || s[0] == 0 || s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("split times {s:?} must be positive and strictly increasing")));
        }
        Ok(Constraint::SplitTimes(s))
    }

    pub fn custom<F>(id: impl Into<String>, heredity: u32, f: F) -> Self
    where
        F: Fn(&MarkedTree, &[NodeId]) -> f64 + Send + Sync + 'static,
    {
        Constraint::Custom { id: id.into(), heredity, f: Arc::new(f) }
    }

    /// Heredity generation 𝔤.
    pub fn heredity(&self) -> u32 {
        match self {
            Constraint::One => 1,
            Constraint::Lambda(l) => l.iter().flatten().copied().max().unwrap_or(1).max(1),
            Constraint::SplitBy(m) => (*m).max(1),
            Constraint::SplitTimes(s) => *s.last().unwrap(),
            Constraint::Genealogy(sig) => sig.first_full_split(),
            Constraint::Custom { heredity, .. } => *heredity,
        }
    }

    /// Stable textual descriptor, accepted back by [`Constraint::parse`]
    /// except for custom constraints.
    pub fn id(&self) -> String {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        match self {
            Constraint::One => "one".into(),
            Constraint::Lambda(l) => format!(
                "lambda:{}",
                l.iter().map(|x| x.map_or("inf".to_string(), |v| v.to_string())).collect::<Vec<_>>().join(",")
            ),
            Constraint::SplitBy(m) => format!("split-by:{m}"),
            Constraint::SplitTimes(s) => format!("split-times:{}", join(s)),
            Constraint::Genealogy(sig) => format!("genealogy:{}", serde_json::to_string(sig).unwrap()),
            Constraint::Custom { id, .. } => format!("custom:{id}"),
        }
    }

    /// Parses `one`, `lambda:3,inf`, `split-by:4`, `split-times:2,5` or
    /// `genealogy:{"t":[..],"xi":[..]}`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("constraint `{text}`: {m}"));
        let (head, rest) = text.split_once(':').unwrap_or((text, ""));
        let numbers = |r: &str| -> Result<Vec<u32>> {
            r.split(',').map(|v| v.trim().parse::<u32>().map_err(|e| bad(&e.to_string()))).collect()
        };
        match head.trim() {
            "one" => Ok(Constraint::One),
            "lambda" => rest
                .split(',')
                .map(|v| match v.trim() {
                    "inf" => Ok(None),
                    v => v.parse::<u32>().map(Some).map_err(|e| bad(&e.to_string())),
                })
                .collect::<Result<_>>()
                .map(Constraint::Lambda),
            "split-by" => Ok(Constraint::SplitBy(rest.trim().parse().map_err(|_| bad("expected an integer"))?)),
            "split-times" => Constraint::split_times(numbers(rest)?),
            "genealogy" => {
                let sig: GenealogySignature = serde_json::from_str(rest).map_err(|e| bad(&e.to_string()))?;
                sig.validate()?;
                Ok(Constraint::Genealogy(sig))
            }
            _ => Err(bad("unknown constraint")),
        }
    }

    /// f(x) for x ∈ Δ^k.
    pub fn eval(&self, tree: &MarkedTree, x: &[NodeId]) -> f64 {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        match self {
            Constraint::One => 1.0,
            Constraint::Lambda(l) => b(x.windows(2).zip(l).all(|(w, lam)| match lam {
                None => true,
                Some(lam) => tree.generation(tree.mrca(w[0], w[1])) < *lam,
            })),
            Constraint::SplitBy(m) => b(first_full_split_unchecked(tree, x) <= *m),
            Constraint::SplitTimes(s) => b(x.len() >= 2 && split_times(tree, x) == *s),
            Constraint::Genealogy(sig) => b(sig.k() == x.len() && genealogy_indicator_unchecked(tree, x, sig)),
            Constraint::Custom { f, .. } => f(tree, x),
        }
    }
}

impl Serialize for Constraint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for Constraint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Constraint::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Outcome of [`hereditary_check`].
#[derive(Debug, Clone, Serialize)]
pub struct HereditaryReport {
    pub constraint: String,
    pub heredity: u32,
    pub checked: usize,
    pub passed: bool,
    /// Tuple, generation p and the two differing values.
    pub counterexample: Option<(Vec<NodeId>, u32, f64, f64)>,
}

/// Randomized test of heredity at generation `g`: draws k-tuples from the
/// trees, keeps those in Δ^k, picks p with max(S^k(x), g) ≤ p ≤ min |x^{(i)}|
/// and compares f(x) with f((x^{(i)})_p).
pub fn hereditary_check<R: Rng + ?Sized>(
    f: &Constraint,
    trees: &[MarkedTree],
    g: u32,
    k: usize,
    samples: usize,
    rng: &mut R,
) -> HereditaryReport {
    let mut report =
        HereditaryReport { constraint: f.id(), heredity: g, checked: 0, passed: true, counterexample: None };
    let pools: Vec<Vec<NodeId>> = trees
        .iter()
        .map(|t| t.nodes().filter(|&v| t.generation(v) >= g.max(1)).collect())
        .collect();
    if pools.iter().all(|p| p.len() < k) {
        return report;
    }
    let mut attempts = 0usize;
    while report.checked < samples && attempts < samples * 200 {
        attempts += 1;
        let ti = rng.random_range(0..trees.len());
        let (tree, pool) = (&trees[ti], &pools[ti]);
        if pool.len() < k {
            continue;
        }
        let x: Vec<NodeId> = (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let related = (0..k).any(|i| {
            (0..i).any(|j| tree.is_ancestor_or_equal(x[i], x[j]) || tree.is_ancestor_or_equal(x[j], x[i]))
        });
        if related {
            continue;
        }
        let lo = first_full_split_unchecked(tree, &x).max(g);
        let hi = x.iter().map(|&v| tree.generation(v)).min().unwrap();
        if lo > hi {
            continue;
        }
        let p = rng.random_range(lo..=hi);
        let y: Vec<NodeId> = x.iter().map(|&v| tree.ancestor(v, p)).collect();
        let (a, b) = (f.eval(tree, &x), f.eval(tree, &y));
        report.checked += 1;
        if a != b {
            report.passed = false;
            report.counterexample = Some((x, p, a, b));
            break;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::super::{coalescent_times, signatures};
    use super::*;
    use crate::environment::EnvironmentLaw;
    use crate::rng::stream;
    use crate::tree::{enumerate_delta_k, TreeBuilder};

    fn trees(depth: u32) -> Vec<MarkedTree> {
        let law = Arc::new(EnvironmentLaw::reference());
        (0..4).map(|s| MarkedTree::generate(law.clone(), depth, 40 + s).unwrap()).collect()
    }

    #[test]
    fn sibling_pair_split_by_one() {
        let mut b = TreeBuilder::new();
        let c = b.children(NodeId::ROOT, &[0.0, 1.0]);
        let t = b.build();
        assert_eq!(Constraint::f_m(1).eval(&t, &c), 1.0);
        assert_eq!(Constraint::f_lambda(vec![Some(1)]).eval(&t, &c), 1.0);
        assert_eq!(Constraint::f_lambda(vec![Some(0)]).eval(&t, &c), 0.0);
    }

    #[test]
    fn infinite_lambda_is_one() {
        let ts = trees(5);
        let f = Constraint::f_lambda(vec![None, None]);
        for t in &ts {
            let nodes: Vec<NodeId> = t.nodes().collect();
            for x in enumerate_delta_k(t, &nodes[..nodes.len().min(40)], 3) {
                assert_eq!(f.eval(t, &x), 1.0);
            }
        }
    }

    #[test]
    fn heredity_of_library_constraints() {
        let ts = trees(8);
        let mut rng = stream(5, "heredity", 0);
        let one = hereditary_check(&Constraint::One, &ts, 1, 3, 500, &mut rng);
        assert!(one.passed && one.checked == 500);
        let lam = Constraint::f_lambda(vec![Some(3), Some(2)]);
        let r = hereditary_check(&lam, &ts, lam.heredity(), 3, 500, &mut rng);
        assert_eq!(lam.heredity(), 3);
        assert!(r.passed && r.checked == 500);
        let fm = Constraint::f_m(4);
        assert!(hereditary_check(&fm, &ts, 4, 2, 500, &mut rng).passed);
        let fs = Constraint::split_times(vec![2, 4]).unwrap();
        assert!(hereditary_check(&fs, &ts, 4, 3, 500, &mut rng).passed);
    }

    #[test]
    fn parity_of_first_generation_is_not_hereditary() {
        let ts = trees(8);
        let mut rng = stream(5, "heredity-parity", 0);
        let f = Constraint::custom("first-even", 1, |t, x| if t.generation(x[0]) % 2 == 0 { 1.0 } else { 0.0 });
        let r = hereditary_check(&f, &ts, 1, 2, 500, &mut rng);
        assert!(!r.passed);
        assert!(r.counterexample.is_some());
    }

    #[test]
    fn split_time_indicators_sum_to_split_by() {
        // Σ_{ℓ<k} Σ_{s ≤ 𝔰} F^ℓ_s = 1_{𝒞^k_𝔰} pointwise
        let ts = trees(5);
        for t in &ts[..2] {
            let nodes: Vec<NodeId> = t.nodes().collect();
            for k in 2..=3 {
                let mut all_s: Vec<Vec<u32>> = signatures(k, 6).unwrap().into_iter().map(|s| s.times).collect();
                all_s.sort();
                all_s.dedup();
                for x in enumerate_delta_k(t, &nodes[..nodes.len().min(30)], k) {
                    for cap in 1..=6 {
                        let total: f64 = all_s
                            .iter()
                            .filter(|s| *s.last().unwrap() <= cap)
                            .map(|s| Constraint::SplitTimes(s.clone()).eval(t, &x))
                            .sum();
                        assert_eq!(total, Constraint::f_m(cap).eval(t, &x));
                    }
                    let sig = coalescent_times(t, &x).unwrap();
                    assert_eq!(Constraint::Genealogy(sig).eval(t, &x), 1.0);
                }
            }
        }
    }

    #[test]
    fn descriptor_round_trip() {
        for text in ["one", "lambda:3,inf", "split-by:4", "split-times:2,5", r#"genealogy:{"t":[2],"xi":[[[1,2]],[[1],[2]]]}"#]
        {
            let c = Constraint::parse(text).unwrap();
            assert_eq!(c.id(), text);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<Constraint>(&json).unwrap().id(), text);
        }
        assert!(Constraint::parse("split-times:3,2").is_err());
        assert!(Constraint::parse("bogus").is_err());
    }
}
