//! Environment laws: the offspring/displacement law of the branching random
//! walk, its log-Laplace transform, the regime it puts the walk in, the
//! many-to-one walk, and the constants and generation schedules derived from
//! them.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::stats::{monte_carlo, Estimate};

/// Upper end of the search interval for the second zero of the log-Laplace transform.
pub const KAPPA_SEARCH_MAX: f64 = 64.0;
/// Bisection tolerance (in `t`) for that search.
pub const KAPPA_TOLERANCE: f64 = 1e-12;
/// Tolerance on `ψ(1) = 0` for a law to count as calibrated.
pub const CALIBRATION_TOLERANCE: f64 = 1e-12;

/// One outcome of the reproduction law: with probability `prob` a vertex has
/// `displacements.len()` children with these displacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub prob: f64,
    pub displacements: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// With probability `q` one child displaced by `a`; otherwise `m` children
    /// each displaced by `b`.
    TwoPoint { q: f64, a: f64, m: u32, b: f64 },
    /// Arbitrary finite list of atoms.
    Atoms { atoms: Vec<Atom> },
    /// Exactly `children` children with i.i.d. Gaussian displacements.
    Gaussian { children: u32, mean: f64, sd: f64 },
}

/// Reproduction law of the marked Galton–Watson tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentLaw {
    pub family: Family,
    #[serde(skip)]
    atoms: Vec<Atom>,
}

impl EnvironmentLaw {
    /// Two-point law; `b = None` solves `ψ(1) = 0` for `b`.
    pub fn two_point(q: f64, a: f64, m: u32, b: Option<f64>) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidLaw(format!("q = {q} must lie in (0, 1)")));
        }
        if m == 0 {
            return Err(Error::InvalidLaw("m must be at least 1".into()));
        }
        if !a.is_finite() {
            return Err(Error::InvalidLaw("displacement a must be finite".into()));
        }
        let b = match b {
            Some(b) => b,
            None => {
                let rest = 1.0 - q * (-a).exp();
                if rest <= 0.0 {
                    return Err(Error::Calibration(format!(
                        "q·e^(-a) = {} >= 1, no b satisfies ψ(1) = 0",
                        q * (-a).exp()
                    )));
                }
                -(rest / ((1.0 - q) * f64::from(m))).ln()
            }
        };
        if !b.is_finite() {
            return Err(Error::InvalidLaw("displacement b must be finite".into()));
        }
        Ok(Self::from_family(Family::TwoPoint { q, a, m, b }))
    }

    /// The reference law used throughout: `q = 1/2, a = −0.1, m = 3`, calibrated `b`.
    pub fn reference() -> Self {
        Self::two_point(0.5, -0.1, 3, None).expect("reference law calibrates")
    }

    /// Two-point law on the boundary `ψ(1) = ψ'(1) = 0` (slow regime).
    pub fn two_point_boundary(q: f64, m: u32) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) || m < 2 {
            return Err(Error::InvalidLaw("need q in (0,1) and m >= 2".into()));
        }
        // u = q e^{-a}, 1-u = (1-q) m e^{-b};  ψ'(1)=0 ⇔ u·a + (1-u)·b = 0.
        let g = |u: f64| {
            let a = -(u / q).ln();
            let b = -((1.0 - u) / ((1.0 - q) * f64::from(m))).ln();
            u * a + (1.0 - u) * b
        };
        // g(0+) = b(0) = ln((1-q)m) > 0 needs (1-q)m > 1; g(1-) = -ln(1/q)... sign change.
        let (mut lo, mut hi) = (1e-15, 1.0 - 1e-15);
        if g(lo).signum() == g(hi).signum() {
            return Err(Error::Calibration("no boundary two-point law for these q, m".into()));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid).signum() == g(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        let a = -(u / q).ln();
        Self::two_point(q, a, m, None)
    }

    pub fn atoms(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidLaw("no atoms".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-12 || atoms.iter().any(|a| a.prob.is_nan() || a.prob < 0.0) {
            return Err(Error::InvalidLaw(format!("atom probabilities sum to {total}")));
        }
        if atoms.iter().flat_map(|a| &a.displacements).any(|d| !d.is_finite()) {
            return Err(Error::InvalidLaw("non-finite displacement".into()));
        }
        Ok(Self::from_family(Family::Atoms { atoms }))
    }

    /// Every vertex has `children` children, all displaced by `displacement`.
    pub fn deterministic(children: u32, displacement: f64) -> Result<Self> {
        Self::atoms(vec![Atom { prob: 1.0, displacements: vec![displacement; children as usize] }])
    }

    pub fn gaussian(children: u32, mean: f64, sd: f64) -> Result<Self> {
        if children == 0 || sd.is_nan() || sd <= 0.0 || !mean.is_finite() {
            return Err(Error::InvalidLaw("gaussian family needs children >= 1, sd > 0".into()));
        }
        Ok(Self::from_family(Family::Gaussian { children, mean, sd }))
    }

    /// Gaussian family with the mean chosen so that `ψ(1) = 0`.
    pub fn gaussian_calibrated(children: u32, sd: f64) -> Result<Self> {
        let mean = f64::from(children).ln() + 0.5 * sd * sd;
        Self::gaussian(children, mean, sd)
    }

    pub fn from_family(family: Family) -> Self {
        let atoms = match &family {
            Family::TwoPoint { q, a, m, b } => vec![
                Atom { prob: *q, displacements: vec![*a] },
                Atom { prob: 1.0 - q, displacements: vec![*b; *m as usize] },
            ],
            Family::Atoms { atoms } => atoms.clone(),
            Family::Gaussian { .. } => Vec::new(),
        };
        EnvironmentLaw { family, atoms }
    }

    /// Rebuild derived state after deserialization.
    pub fn normalized(self) -> Self {
        Self::from_family(self.family)
    }

    /// Finite-atom representation (empty for the Gaussian family).
    pub fn finite_atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_finite_atom(&self) -> bool {
        !matches!(self.family, Family::Gaussian { .. })
    }

    /// ψ(t) = log E[Σ_{|x|=1} e^{−t V(x)}].
    pub fn log_laplace(&self, t: f64) -> Result<f64> {
        match &self.family {
            Family::Gaussian { children, mean, sd } => {
                Ok(f64::from(*children).ln() - t * mean + 0.5 * t * t * sd * sd)
            }
            _ => {
                let terms: Vec<f64> = self
                    .atoms
                    .iter()
                    .filter(|a| a.prob > 0.0)
                    .flat_map(|a| a.displacements.iter().map(move |d| a.prob.ln() - t * d))
                    .collect();
                if terms.is_empty() {
                    return Err(Error::Domain(t));
                }
                Ok(log_sum_exp(&terms))
            }
        }
    }

    /// ψ'(t).
    pub fn log_laplace_derivative(&self, t: f64) -> Result<f64> {
        match &self.family {
            Family::Gaussian { mean, sd, .. } => Ok(-mean + t * sd * sd),
            _ => {
                let psi = self.log_laplace(t)?;
                let num: f64 = self
                    .atoms
                    .iter()
                    .flat_map(|a| a.displacements.iter().map(move |d| -d * a.prob * (-t * d - psi).exp()))
                    .sum();
                Ok(num)
            }
        }
    }

    fn psi(&self, t: f64) -> f64 {
        self.log_laplace(t).unwrap_or(f64::INFINITY)
    }

    /// E[N].
    pub fn mean_offspring(&self) -> f64 {
        match &self.family {
            Family::Gaussian { children, .. } => f64::from(*children),
            _ => self.atoms.iter().map(|a| a.prob * a.displacements.len() as f64).sum(),
        }
    }

    /// Law of N as `(count, probability)` pairs, merged over atoms.
    pub fn offspring_distribution(&self) -> Vec<(usize, f64)> {
        match &self.family {
            Family::Gaussian { children, .. } => vec![(*children as usize, 1.0)],
            _ => {
                let mut out: Vec<(usize, f64)> = Vec::new();
                for a in &self.atoms {
                    let n = a.displacements.len();
                    match out.iter_mut().find(|(c, _)| *c == n) {
                        Some(slot) => slot.1 += a.prob,
                        None => out.push((n, a.prob)),
                    }
                }
                out.sort_by_key(|p| p.0);
                out
            }
        }
    }

    pub fn extinction_possible(&self) -> bool {
        self.offspring_distribution().iter().any(|&(n, p)| n == 0 && p > 0.0)
    }

    /// Ellipticity bound 𝔥 = −(smallest displacement); infinite when unbounded below.
    pub fn ellipticity_bound(&self) -> f64 {
        match &self.family {
            Family::Gaussian { .. } => f64::INFINITY,
            _ => -self
                .atoms
                .iter()
                .filter(|a| a.prob > 0.0)
                .flat_map(|a| a.displacements.iter().copied())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Draw the displacements of one vertex's children.
    pub fn sample_offspring<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.family {
            Family::Gaussian { children, mean, sd } => {
                let normal = Normal::new(*mean, *sd).expect("validated");
                (0..*children).map(|_| normal.sample(rng)).collect()
            }
            _ => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for a in &self.atoms {
                    acc += a.prob;
                    if u < acc {
                        return a.displacements.clone();
                    }
                }
                self.atoms.last().map(|a| a.displacements.clone()).unwrap_or_default()
            }
        }
    }

    /// κ = inf{t > 1 : ψ(t) = 0}.
    pub fn kappa(&self) -> Result<Kappa> {
        let psi1 = self.log_laplace(1.0)?;
        if psi1.abs() > CALIBRATION_TOLERANCE {
            return Err(Error::Calibration(format!("ψ(1) = {psi1:e}, expected 0")));
        }
        let d1 = self.log_laplace_derivative(1.0)?;
        if d1 >= 0.0 {
            return Err(Error::Assumption(format!("ψ'(1) = {d1} is not negative")));
        }
        // ψ is convex, zero at 1 and decreasing there: it has at most one more zero.
        let step = 0.25;
        let mut lo = 1.0;
        let mut t = 1.0 + step;
        while t <= KAPPA_SEARCH_MAX {
            if self.psi(t) >= 0.0 {
                let mut hi = t;
                while hi - lo > KAPPA_TOLERANCE {
                    let mid = 0.5 * (lo + hi);
                    if self.psi(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(Kappa::Finite(0.5 * (lo + hi)));
            }
            lo = t;
            t += step;
        }
        Ok(Kappa::Infinite)
    }

    /// inf_{t∈[0,1]} ψ(t), by golden-section search (ψ is convex).
    pub fn inf_psi_unit_interval(&self) -> Result<f64> {
        let (t, v) = golden_min(|t| self.psi(t), 0.0, 1.0, 1e-12);
        let v = v.min(self.log_laplace(0.0)?).min(self.log_laplace(1.0)?);
        let _ = t;
        Ok(v)
    }

    pub fn classify_regime(&self) -> Result<Regime> {
        let inf = self.inf_psi_unit_interval()?;
        const ZERO: f64 = 1e-9;
        if inf > ZERO {
            return Ok(Regime::Transient);
        }
        if inf < -ZERO {
            return Ok(Regime::PositiveRecurrent);
        }
        let d1 = self.log_laplace_derivative(1.0)?;
        if d1 > ZERO {
            return Ok(Regime::PositiveRecurrent);
        }
        if d1.abs() <= ZERO {
            return Ok(Regime::NullRecurrentSlow);
        }
        Ok(match self.kappa()? {
            Kappa::Finite(k) if k <= 2.0 => Regime::NullRecurrentSubdiffusive,
            _ => Regime::NullRecurrentDiffusive,
        })
    }

    /// c_j(β) = E[Σ over ordered j-tuples of distinct children of e^{−⟨β, V⟩}].
    pub fn moment_c_j(&self, beta: &[u32]) -> Result<f64> {
        let j = beta.len();
        if j == 0 || beta.contains(&0) {
            return Err(Error::InvalidArgument("β must be a non-empty vector of positive integers".into()));
        }
        match &self.family {
            Family::Gaussian { children, mean, sd } => {
                let m = *children as usize;
                if m < j {
                    return Ok(0.0);
                }
                let falling: f64 = (0..j).map(|i| (m - i) as f64).product();
                let mgf: f64 = beta
                    .iter()
                    .map(|&b| {
                        let b = f64::from(b);
                        (-b * mean + 0.5 * b * b * sd * sd).exp()
                    })
                    .product();
                Ok(falling * mgf)
            }
            _ => {
                let mut total = 0.0;
                for atom in &self.atoms {
                    if atom.displacements.len() >= j {
                        total += atom.prob * ordered_distinct_sum(&atom.displacements, beta);
                    }
                }
                Ok(total)
            }
        }
    }

    /// c_0 = c_2(1,1) / (1 − e^{ψ(2)}).
    pub fn c_zero(&self) -> Result<f64> {
        let psi2 = self.log_laplace(2.0)?;
        if psi2 >= 0.0 {
            return Err(Error::Assumption(format!("ψ(2) = {psi2} >= 0, c_0 undefined")));
        }
        Ok(self.moment_c_j(&[1, 1])? / (1.0 - psi2.exp()))
    }

    /// Law of the first step of the many-to-one walk S.
    pub fn many_to_one_step_law(&self) -> Result<StepLaw> {
        match &self.family {
            Family::Gaussian { mean, sd, .. } => {
                let psi1 = self.log_laplace(1.0)?;
                if psi1.abs() > 1e-9 {
                    return Err(Error::Calibration(format!("tilted mass e^ψ(1) = {}", psi1.exp())));
                }
                Ok(StepLaw::Normal { mean: mean - sd * sd, sd: *sd })
            }
            _ => {
                let mut atoms: Vec<(f64, f64)> = Vec::new();
                for a in &self.atoms {
                    for &d in &a.displacements {
                        let w = a.prob * (-d).exp();
                        match atoms.iter_mut().find(|(x, _)| *x == d) {
                            Some(slot) => slot.1 += w,
                            None => atoms.push((d, w)),
                        }
                    }
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Calibration(format!("tilted masses sum to {total}")));
                }
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                Ok(StepLaw::Discrete { atoms })
            }
        }
    }

    /// Monte Carlo estimate of c_∞ = E[(Σ_{j=0}^{L} e^{−S_j})^{−1}].
    pub fn estimate_c_infinity(
        &self,
        truncation: usize,
        replicas: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<CInfinity> {
        if replicas == 0 {
            return Err(Error::InvalidArgument("need at least one replica".into()));
        }
        let step = self.many_to_one_step_law()?;
        let estimate = monte_carlo(exec, seed, "c-infinity", replicas, |rng| {
            let mut s = 0.0;
            let mut total = 1.0;
            for _ in 0..truncation {
                s += step.sample(rng);
                total += (-s).exp();
            }
            1.0 / total
        });
        Ok(CInfinity { estimate, truncation, lower_bound: 1.0 - self.log_laplace(2.0)?.exp(), upper_bound: 1.0 })
    }

    /// δ0 = 0.9 · sup_{t∈(1,κ)} (−ψ(t)/t) / 3.
    pub fn delta_zero(&self) -> Result<f64> {
        let hi = match self.kappa()? {
            Kappa::Finite(k) => k,
            Kappa::Infinite => KAPPA_SEARCH_MAX,
        };
        let (_, v) = golden_min(|t| self.psi(t) / t, 1.0, hi, 1e-10);
        Ok(0.9 * (-v).max(0.0) / 3.0)
    }
}

/// log Σ e^{x_i}.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// Σ over ordered tuples of distinct indices of Π e^{−β_i d_{idx_i}}.
fn ordered_distinct_sum(ds: &[f64], beta: &[u32]) -> f64 {
    fn rec(ds: &[f64], beta: &[u32], used: &mut Vec<bool>, depth: usize) -> f64 {
        if depth == beta.len() {
            return 1.0;
        }
        let mut total = 0.0;
        for i in 0..ds.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            total += (-f64::from(beta[depth]) * ds[i]).exp() * rec(ds, beta, used, depth + 1);
            used[i] = false;
        }
        total
    }
    rec(ds, beta, &mut vec![false; ds.len()], 0)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kappa {
    Finite(f64),
    Infinite,
}

impl Kappa {
    pub fn value(self) -> f64 {
        match self {
            Kappa::Finite(k) => k,
            Kappa::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Transient,
    PositiveRecurrent,
    NullRecurrentSlow,
    NullRecurrentSubdiffusive,
    NullRecurrentDiffusive,
}

/// First-step law of the many-to-one walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepLaw {
    /// `(location, probability)` pairs sorted by location.
    Discrete { atoms: Vec<(f64, f64)> },
    Normal { mean: f64, sd: f64 },
}

impl StepLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            StepLaw::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(x, p) in atoms {
                    acc += p;
                    if u < acc {
                        return x;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
            StepLaw::Normal { mean, sd } => Normal::new(*mean, *sd).expect("sd > 0").sample(rng),
        }
    }

    /// Path S_0 = 0, S_1, …, S_steps.
    pub fn sample_path<R: Rng + ?Sized>(&self, steps: usize, rng: &mut R) -> Vec<f64> {
        let mut path = Vec::with_capacity(steps + 1);
        let mut s = 0.0;
        path.push(s);
        for _ in 0..steps {
            s += self.sample(rng);
            path.push(s);
        }
        path
    }

    pub fn mean(&self) -> f64 {
        match self {
            StepLaw::Discrete { atoms } => atoms.iter().map(|(x, p)| x * p).sum(),
            StepLaw::Normal { mean, .. } => *mean,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            StepLaw::Discrete { atoms } => atoms.iter().map(|a| a.1).sum(),
            StepLaw::Normal { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CInfinity {
    pub estimate: Estimate,
    pub truncation: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl CInfinity {
    pub fn within_bracket(&self) -> bool {
        self.estimate.mean >= self.lower_bound && self.estimate.mean <= self.upper_bound
    }
}

/// One line of an assumption report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub k: usize,
    pub psi1: f64,
    pub psi_prime1: f64,
    pub kappa: f64,
    pub h_ell: f64,
    pub checks: Vec<Check>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Check the standing assumptions behind the k-tuple range limits.
pub fn check_assumptions(law: &EnvironmentLaw, k: usize) -> Result<AssumptionReport> {
    if k < 2 {
        return Err(Error::InvalidArgument("k must be at least 2".into()));
    }
    let psi1 = law.log_laplace(1.0)?;
    let psi_prime1 = law.log_laplace_derivative(1.0)?;
    let kappa = law.kappa().map(Kappa::value).unwrap_or(f64::NAN);
    let h_ell = law.ellipticity_bound();
    let mut checks = vec![
        Check {
            name: "psi1_zero".into(),
            passed: psi1.abs() <= CALIBRATION_TOLERANCE,
            value: psi1,
            detail: "ψ(1) = 0".into(),
        },
        Check {
            name: "psi_prime1_negative".into(),
            passed: psi_prime1 < 0.0,
            value: psi_prime1,
            detail: "ψ'(1) < 0".into(),
        },
        Check {
            name: "kappa_gt_2k".into(),
            passed: kappa > 2.0 * k as f64,
            value: kappa,
            detail: format!("κ > {}", 2 * k),
        },
        Check {
            name: "ellipticity".into(),
            passed: h_ell.is_finite(),
            value: h_ell,
            detail: "displacements bounded below".into(),
        },
    ];
    // Joint moments c_j(β) for j ≤ ⌈κ⌉ and Σβ ≤ ⌈κ⌉.
    let moments_ok = if law.is_finite_atom() {
        true
    } else {
        let cap = if kappa.is_finite() { kappa.ceil() as u32 } else { 8 };
        (1..=cap).all(|j| {
            compositions_bounded(j as usize, cap)
                .iter()
                .all(|beta| law.moment_c_j(beta).map(f64::is_finite).unwrap_or(false))
        })
    };
    checks.push(Check {
        name: "joint_moments".into(),
        passed: moments_ok,
        value: if moments_ok { 1.0 } else { 0.0 },
        detail: "c_j(β) < ∞ for j ≤ ⌈κ⌉, Σβ ≤ ⌈κ⌉".into(),
    });
    Ok(AssumptionReport { k, psi1, psi_prime1, kappa, h_ell, checks })
}

// Positive integer vectors of length j with sum <= cap.
fn compositions_bounded(j: usize, cap: u32) -> Vec<Vec<u32>> {
    fn rec(j: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == j {
            out.push(cur.clone());
            return;
        }
        let need = (j - cur.len() - 1) as u32;
        for b in 1..=left.saturating_sub(need) {
            cur.push(b);
            rec(j, left - b, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if j as u32 <= cap {
        rec(j, cap, &mut Vec::new(), &mut out);
    }
    out
}

/// Generation band and the deterministic constants that go with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: u64,
    pub delta0: f64,
    /// a_n = ⌈(2δ0)^{-1} log n⌉.
    pub a_n: u64,
    /// Lowest generation of the band.
    pub lower: u64,
    /// Highest generation of the band.
    pub upper: u64,
    pub l0: u32,
    /// Whether the band satisfies δ0^{-1} log n ≤ lower ≤ upper ≤ √n.
    pub asymptotic: bool,
}

impl Schedule {
    /// Band height 𝑳_n = upper − lower + 1.
    pub fn height(&self) -> u64 {
        self.upper - self.lower + 1
    }

    /// Number of excursions ⌈√n⌉.
    pub fn excursions(&self) -> u32 {
        (self.n as f64).sqrt().ceil() as u32
    }

    /// Replace the band (desk-scale experiments).
    pub fn with_band(mut self, lower: u64, upper: u64) -> Result<Self> {
        if lower > upper {
            return Err(Error::ScheduleInfeasible {
                n: self.n,
                lower,
                upper,
                min_feasible_n: f64::NAN,
            });
        }
        self.lower = lower;
        self.upper = upper;
        self.asymptotic = asymptotic_band(self.delta0, self.n, lower, upper);
        Ok(self)
    }
}

fn asymptotic_band(delta0: f64, n: u64, lower: u64, upper: u64) -> bool {
    let log_n = (n as f64).ln();
    log_n / delta0 <= lower as f64 && lower <= upper && upper as f64 <= (n as f64).sqrt()
}

/// Iterated logarithm Λ_i (Λ_0(t) = t, Λ_1 = log, …).
pub fn iterated_log(t: f64, i: u32) -> f64 {
    (0..i).fold(t, |acc, _| acc.ln())
}

fn default_upper(n: f64) -> u64 {
    (n.sqrt() / n.ln().powi(2)).floor().max(0.0) as u64
}

fn default_lower(delta0: f64, n: f64) -> u64 {
    (n.ln() / delta0).ceil() as u64
}

/// Default schedule: lower = ⌈δ0^{-1} log n⌉, upper = ⌊√n/(log n)²⌋.
pub fn compute_schedule(law: &EnvironmentLaw, n: u64, l0: u32) -> Result<Schedule> {
    if law.kappa()?.value() <= 2.0 {
        return Err(Error::Assumption("schedule requires κ > 2".into()));
    }
    if n < 3 {
        return Err(Error::InvalidArgument("n must be at least 3".into()));
    }
    let delta0 = law.delta_zero()?;
    let nf = n as f64;
    let lower = default_lower(delta0, nf);
    let upper = default_upper(nf);
    let a_n = (nf.ln() / (2.0 * delta0)).ceil() as u64;
    if upper < lower {
        return Err(Error::ScheduleInfeasible { n, lower, upper, min_feasible_n: minimal_feasible_n(delta0) });
    }
    Ok(Schedule { n, delta0, a_n, lower, upper, l0, asymptotic: asymptotic_band(delta0, n, lower, upper) })
}

/// Schedule with an explicit band; δ0 and a_n still come from the law.
pub fn schedule_with_band(law: &EnvironmentLaw, n: u64, lower: u64, upper: u64) -> Result<Schedule> {
    let delta0 = law.delta_zero()?;
    let nf = n as f64;
    let a_n = (nf.ln() / (2.0 * delta0)).ceil() as u64;
    Schedule { n, delta0, a_n, lower, upper, l0: 1, asymptotic: false }.with_band(lower, upper)
}

/// Smallest n (scanning log n on a 0.01 grid) where the default band is non-empty.
pub fn minimal_feasible_n(delta0: f64) -> f64 {
    let mut x: f64 = 1.0;
    while x < 700.0 {
        let n = x.exp();
        if default_upper(n) >= default_lower(delta0, n) {
            return n;
        }
        x += 0.01;
    }
    f64::INFINITY
}

/// Values of 𝔏_n · Λ_{l0}(𝔏_n) / √n for the default upper generation on a grid.
pub fn small_generation_profile(grid: &[u64], l0: u32) -> Vec<f64> {
    grid.iter()
        .map(|&n| {
            let nf = n as f64;
            let upper = default_upper(nf) as f64;
            if upper < 1.0 {
                0.0
            } else {
                upper * iterated_log(upper, l0) / nf.sqrt()
            }
        })
        .collect()
}
