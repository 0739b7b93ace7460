//! Small statistics toolkit: Monte Carlo means with standard errors, medians,
//! exact floating-point summation and a half-normal KS distance.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::par::{map_indexed, Execution};
use crate::rng::{stream, StreamRng};

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate { mean, se: (var / n as f64).sqrt(), samples: n }
    }

    /// Point value with zero uncertainty.
    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, se: 0.0, samples: 1 }
    }

    pub fn combined_se(&self, other: &Estimate) -> f64 {
        self.se.hypot(other.se)
    }

    /// `|self − other| ≤ sigmas · combined SE`.
    pub fn agrees_with(&self, other: &Estimate, sigmas: f64) -> bool {
        (self.mean - other.mean).abs() <= sigmas * self.combined_se(other)
    }

    /// `|self − value| ≤ sigmas · SE`.
    pub fn agrees_with_value(&self, value: f64, sigmas: f64) -> bool {
        (self.mean - value).abs() <= sigmas * self.se
    }

    /// Distance from `value` in units of SE.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value) / self.se
    }
}

/// Run `replicas` independent draws of `sample`, each on its own stream.
pub fn monte_carlo<F>(exec: Execution, master: u64, tag: &str, replicas: usize, sample: F) -> Estimate
where
    F: Fn(&mut StreamRng) -> f64 + Send + Sync,
{
    let xs = map_indexed(exec, replicas, |i| {
        let mut rng = stream(master, tag, i as u64);
        sample(&mut rng)
    });
    Estimate::from_samples(&xs)
}

/// Vector-valued variant of [`monte_carlo`]: one estimate per coordinate.
pub fn monte_carlo_vec<F>(
    exec: Execution,
    master: u64,
    tag: &str,
    replicas: usize,
    sample: F,
) -> Vec<Estimate>
where
    F: Fn(&mut StreamRng) -> Vec<f64> + Send + Sync,
{
    let rows = map_indexed(exec, replicas, |i| {
        let mut rng = stream(master, tag, i as u64);
        sample(&mut rng)
    });
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|c| Estimate::from_samples(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// True when every element is `<=` its predecessor (plus `slack`).
pub fn non_increasing(xs: &[f64], slack: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Exactly rounded sum (Shewchuk's partials, as in Python's `math.fsum`).
///
/// The result depends only on the multiset of inputs, never on their order.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Round-half-even correction across the remaining partials.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// CDF of |N| for a standard Gaussian N.
pub fn half_normal_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf(x / std::f64::consts::SQRT_2)
    }
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and |N|.
pub fn ks_half_normal(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = half_normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
