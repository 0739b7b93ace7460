//! The subcommands. Each one returns its artifacts in memory; the driver
//! writes them together with the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use treewalk::environment::{check_assumptions, minimal_feasible_n, AssumptionReport, CInfinity, EnvironmentLaw, Family};
use treewalk::genealogy::{coalescent_times, Constraint};
use treewalk::par::{map_indexed, Execution};
use treewalk::quenched::{hit_before_return, hit_before_return_oracle};
use treewalk::range::{general_range, sample_uniform_tuple, write_range_csv, RangeOptions, RangeStat};
use treewalk::rng::{derive_seed, stream};
use treewalk::theory::{limit_report, limit_report_from_samples, collect_samples, LimitCheck, LimitReport};
use treewalk::tree::{MarkedTree, NodeId, TreeOptions};
use treewalk::walk::{range_slice_band, run_excursions, RangeSlice, WalkTrace};
use treewalk::Error;

use crate::config::Config;

/// Largest deviation `oracle` accepts between the closed form and the solver.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

pub struct Artifact {
    pub file: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn json<T: Serialize>(file: String, value: &T) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        Artifact { file, bytes }
    }

    fn text(file: String, text: String) -> Self {
        Artifact { file, bytes: text.into_bytes() }
    }
}

/// Result of a completed subcommand.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Printed on stdout.
    pub summary: String,
    /// Set when the run completed but its check did not pass.
    pub failed_check: Option<String>,
}

fn law_of(config: &Config) -> Result<Arc<EnvironmentLaw>, Error> {
    config.law().map(Arc::new).map_err(|(key, msg)| Error::InvalidLaw(format!("law.{key}: {msg}")))
}

fn constraint_of(config: &Config) -> Result<Constraint, Error> {
    Constraint::parse(&config.experiment.constraint)
}

#[derive(Serialize)]
struct AssumptionsArtifact {
    law: Family,
    all_passed: bool,
    delta0: Option<f64>,
    minimal_feasible_n: Option<f64>,
    report: AssumptionReport,
}

pub fn assumptions(config: &Config) -> Result<Outcome, Error> {
    let law = law_of(config)?;
    let report = check_assumptions(&law, config.experiment.k)?;
    let delta0 = law.delta_zero().ok();
    let artifact = AssumptionsArtifact {
        law: law.family.clone(),
        all_passed: report.all_passed(),
        delta0,
        minimal_feasible_n: delta0.map(minimal_feasible_n),
        report,
    };
    let failed: Vec<&str> =
        artifact.report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let failed_check = (!failed.is_empty()).then(|| format!("failed assumptions: {}", failed.join(", ")));
    let out = Artifact::json("assumptions.json".into(), &artifact);
    let summary = String::from_utf8(out.bytes.clone()).expect("utf-8");
    Ok(Outcome { artifacts: vec![out], summary, failed_check })
}

#[derive(Serialize)]
struct MomentRow {
    beta: Vec<u32>,
    value: f64,
}

#[derive(Serialize)]
struct ConstantsArtifact {
    law: Family,
    kappa: f64,
    psi: Vec<(f64, f64)>,
    c_infinity: CInfinity,
    c_zero: f64,
    delta0: f64,
    moments: Vec<MomentRow>,
}

/// Compositions of length 1..=k with positive parts summing to at most k.
fn moment_indices(k: u32) -> Vec<Vec<u32>> {
    fn rec(left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        for b in 1..=left {
            cur.push(b);
            rec(left - b, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

pub fn constants(config: &Config, exec: Execution) -> Result<Outcome, Error> {
    let law = law_of(config)?;
    let e = &config.experiment;
    let kappa = law.kappa()?.value();
    let psi = (1..=2 * e.k as u32)
        .map(f64::from)
        .map(|t| law.log_laplace(t).map(|v| (t, v)))
        .collect::<Result<Vec<_>, _>>()?;
    let c_infinity = law.estimate_c_infinity(
        e.c_infinity_truncation,
        e.c_infinity_replicas,
        derive_seed(e.seed, "constants-c-infinity", 0),
        exec,
    )?;
    let moments = moment_indices(e.k as u32)
        .into_iter()
        .map(|beta| law.moment_c_j(&beta).map(|value| MomentRow { beta, value }))
        .collect::<Result<Vec<_>, _>>()?;
    let artifact = ConstantsArtifact {
        law: law.family.clone(),
        kappa,
        psi,
        c_infinity,
        c_zero: law.c_zero()?,
        delta0: law.delta_zero()?,
        moments,
    };
    let mut csv = String::from("beta,c_j\n");
    for m in &artifact.moments {
        let beta: Vec<String> = m.beta.iter().map(u32::to_string).collect();
        writeln!(csv, "\"{}\",{}", beta.join(";"), m.value).unwrap();
    }
    let summary = format!(
        "kappa = {}\nc_infinity = {} ± {} (truncation {}, {} replicas)\nc_0 = {}\n",
        artifact.kappa,
        artifact.c_infinity.estimate.mean,
        artifact.c_infinity.estimate.se,
        e.c_infinity_truncation,
        e.c_infinity_replicas,
        artifact.c_zero
    );
    Ok(Outcome {
        artifacts: vec![Artifact::json("constants.json".into(), &artifact), Artifact::text("constants-moments.csv".into(), csv)],
        summary,
        failed_check: None,
    })
}

/// One walk of s = ⌈√n⌉ excursions on a fresh environment; `None` when the
/// step budget ran out.
struct Walked {
    tree: MarkedTree,
    trace: Option<WalkTrace>,
    steps: u64,
    slice: Option<RangeSlice>,
}

fn walk_once(law: &Arc<EnvironmentLaw>, config: &Config, tag: &str, n: u64, replica: usize) -> Result<Walked, Error> {
    let seed = config.experiment.seed;
    let mut tree = MarkedTree::lazy(law.clone(), derive_seed(seed, &format!("{tag}-tree"), replica as u64), TreeOptions::with_depth(1 << 24))?;
    let mut rng = stream(seed, &format!("{tag}-walk-{n}"), replica as u64);
    let s = (n as f64).sqrt().ceil() as u32;
    let budget = config.schedule.step_budget_factor.saturating_mul(n);
    match run_excursions(&mut tree, s, Some(budget), &mut rng) {
        Ok(trace) => {
            let (lower, upper) = config.schedule.band().band(n);
            let slice = range_slice_band(&trace, &tree, lower, upper);
            Ok(Walked { steps: trace.steps, tree, trace: Some(trace), slice: Some(slice) })
        }
        Err(f) if matches!(f.error, Error::StepBudget { .. }) => {
            Ok(Walked { steps: f.partial.steps, tree, trace: None, slice: None })
        }
        Err(f) => Err(f.error),
    }
}

pub fn simulate(config: &Config, grid: &[u64], exec: Execution) -> Result<Outcome, Error> {
    let law = law_of(config)?;
    let f = constraint_of(config)?;
    let e = &config.experiment;
    let opts = RangeOptions { exec: Execution::Sequential, tuple_cap: e.tuple_cap };
    let mut slices = String::from("n,replica,excursions,steps,censored,lower,upper,vertices,max_generation\n");
    let mut ranges: Vec<(u64, RangeStat)> = Vec::new();
    let mut traces = Vec::new();
    let mut censored = 0;
    for &n in grid {
        let rows = map_indexed(exec, e.replicas, |r| -> Result<_, Error> {
            let w = walk_once(&law, config, "simulate", n, r)?;
            let (lower, upper) = config.schedule.band().band(n);
            let mut trace_csv = None;
            let stat = match (&w.trace, &w.slice) {
                (Some(trace), Some(slice)) => {
                    if r < e.traces {
                        let mut buf = Vec::new();
                        trace.write_csv(&w.tree, &mut buf).expect("write to memory");
                        trace_csv = Some(buf);
                    }
                    Some(general_range(&w.tree, trace, slice, e.k, &f, opts)?)
                }
                _ => None,
            };
            let line = format!(
                "{n},{r},{},{},{},{lower},{upper},{},{}\n",
                w.trace.as_ref().map_or(0, |t| t.excursions),
                w.steps,
                w.trace.is_none(),
                w.slice.as_ref().map_or(0, RangeSlice::size),
                w.slice.as_ref().and_then(|s| s.max_generation).map_or(String::new(), |g| g.to_string()),
            );
            Ok((line, stat, trace_csv))
        });
        for (r, row) in rows.into_iter().enumerate() {
            let (line, stat, trace_csv) = row?;
            slices.push_str(&line);
            match stat {
                Some(stat) => ranges.push((n, stat)),
                None => censored += 1,
            }
            if let Some(bytes) = trace_csv {
                traces.push(Artifact { file: format!("simulate-trace-n{n}-r{r}.csv"), bytes });
            }
        }
    }
    let mut range_csv = Vec::new();
    write_range_csv(&ranges, &mut range_csv).expect("write to memory");
    let mut artifacts = vec![
        Artifact::text("simulate-slices.csv".into(), slices),
        Artifact { file: "simulate-range.csv".into(), bytes: range_csv },
    ];
    artifacts.extend(traces);
    let summary = format!(
        "{} walks, {} censored by the step budget; range statistics for {} = {}\n",
        grid.len() * e.replicas,
        censored,
        f.id(),
        ranges.len()
    );
    Ok(Outcome { artifacts, summary, failed_check: None })
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

pub fn genealogy(config: &Config, grid: &[u64], exec: Execution) -> Result<Outcome, Error> {
    let law = law_of(config)?;
    let f = constraint_of(config)?;
    let e = &config.experiment;
    let split_by = match f {
        Constraint::SplitBy(m) => Some(m),
        _ => None,
    };
    let mut rows = String::from("n,replica,sample,first_full_split,times,partitions\n");
    let mut split_hist: BTreeMap<(u64, u32), (u64, u64)> = BTreeMap::new();
    let mut signature_counts: BTreeMap<(u64, String, String), u64> = BTreeMap::new();
    let mut sampled = 0usize;
    let mut skipped = 0usize;
    for &n in grid {
        let per_replica = map_indexed(exec, e.replicas, |r| -> Result<Option<Vec<_>>, Error> {
            let w = walk_once(&law, config, "genealogy", n, r)?;
            let Some(slice) = w.slice else { return Ok(None) };
            let mut rng = stream(e.seed, &format!("genealogy-tuples-{n}"), r as u64);
            let mut sigs = Vec::with_capacity(e.samples);
            for _ in 0..e.samples {
                let x = match sample_uniform_tuple(&w.tree, &slice, e.k, split_by, &mut rng) {
                    Ok(x) => x,
                    Err(Error::EmptySupport(_)) => return Ok(None),
                    Err(err) => return Err(err),
                };
                sigs.push(coalescent_times(&w.tree, &x)?);
            }
            Ok(Some(sigs))
        });
        for (r, sigs) in per_replica.into_iter().enumerate() {
            let Some(sigs) = sigs? else {
                skipped += 1;
                continue;
            };
            for (j, sig) in sigs.iter().enumerate() {
                sampled += 1;
                let times = join(&sig.times, ";");
                let partitions = join(sig.collection.levels(), " > ");
                writeln!(rows, "{n},{r},{j},{},\"{times}\",\"{partitions}\"", sig.first_full_split()).unwrap();
                for &t in &sig.times {
                    split_hist.entry((n, t)).or_default().0 += 1;
                }
                split_hist.entry((n, sig.first_full_split())).or_default().1 += 1;
                *signature_counts.entry((n, times, partitions)).or_default() += 1;
            }
        }
    }
    let mut hist = String::from("n,generation,split_events,first_full_splits\n");
    for ((n, g), (events, full)) in &split_hist {
        writeln!(hist, "{n},{g},{events},{full}").unwrap();
    }
    let mut totals: BTreeMap<u64, u64> = BTreeMap::new();
    for ((n, _, _), c) in &signature_counts {
        *totals.entry(*n).or_default() += c;
    }
    let mut sig_rows: Vec<_> = signature_counts.into_iter().collect();
    sig_rows.sort_by(|a, b| a.0 .0.cmp(&b.0 .0).then(b.1.cmp(&a.1)).then_with(|| a.0.cmp(&b.0)));
    let mut sig_csv = String::from("n,times,partitions,count,fraction\n");
    for ((n, times, partitions), c) in &sig_rows {
        writeln!(sig_csv, "{n},\"{times}\",\"{partitions}\",{c},{}", *c as f64 / totals[n] as f64).unwrap();
    }
    let summary = format!(
        "{sampled} tuples sampled (k = {}, constraint {}); {skipped} walks skipped (censored or too small a slice)\n",
        e.k,
        f.id()
    );
    Ok(Outcome {
        artifacts: vec![
            Artifact::text("genealogy-tuples.csv".into(), rows),
            Artifact::text("genealogy-coalescent.csv".into(), hist),
            Artifact::text("genealogy-signatures.csv".into(), sig_csv),
        ],
        summary,
        failed_check: None,
    })
}

pub const TREND_HEADER: &str = "n,m,mean,se,target,deviation,relative_deviation,samples,censored";

pub fn trend_csv(report: &LimitReport) -> String {
    let mut csv = format!("{TREND_HEADER}\n");
    for r in &report.grid {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            r.m.map_or(String::new(), |m| m.to_string()),
            r.mean,
            r.se,
            r.target,
            r.deviation,
            r.relative_deviation.map_or(String::new(), |d| d.to_string()),
            r.samples,
            r.censored
        )
        .unwrap();
    }
    csv
}

/// Constraint a check is evaluated with: the configured one where the check
/// depends on it, else 1.
pub fn check_constraint(check: LimitCheck, config: &Config) -> Result<Constraint, Error> {
    match check {
        LimitCheck::ConstrainedRange | LimitCheck::RangeQuotient => constraint_of(config),
        _ => Ok(Constraint::One),
    }
}

pub fn verify(config: &Config, theorem: &str, grid: &[u64], exec: Execution) -> Result<Outcome, Error> {
    let law = law_of(config)?;
    let check = LimitCheck::parse(theorem)?;
    let f = check_constraint(check, config)?;
    let report = limit_report(theorem, &law, grid, config.experiment.k, &f, &config.desk(exec))?;
    Ok(verify_outcome(theorem, report))
}

/// Several checks on one set of walks (all but `genth7` share their samples).
pub fn verify_shared(config: &Config, theorems: &[&str], grid: &[u64], exec: Execution) -> Result<Vec<Outcome>, Error> {
    let law = law_of(config)?;
    let f = constraint_of(config)?;
    let desk = config.desk(exec);
    let samples = collect_samples(&law, grid, config.experiment.k, &f, &desk)?;
    theorems
        .iter()
        .map(|id| {
            limit_report_from_samples(id, &law, grid, config.experiment.k, &f, &desk, &samples)
                .map(|report| verify_outcome(id, report))
        })
        .collect()
}

fn verify_outcome(theorem: &str, report: LimitReport) -> Outcome {
    let csv = trend_csv(&report);
    let summary = format!("{csv}verdict: {} ({})\n", if report.verdict.passed { "pass" } else { "fail" }, report.verdict.detail);
    let failed_check = (!report.verdict.passed).then(|| report.verdict.detail.clone());
    Outcome {
        artifacts: vec![
            Artifact::json(format!("verify-{theorem}.json"), &report),
            Artifact::text(format!("verify-{theorem}.csv"), csv),
        ],
        summary,
        failed_check,
    }
}

/// One random (tree, target) instance of the hitting-probability oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub instance: usize,
    pub depth: u32,
    pub vertices: usize,
    pub target: u32,
    pub target_generation: u32,
    pub start: u32,
    pub closed_form: f64,
    pub oracle: f64,
    pub deviation: f64,
}

/// Closed-form P_z(T_x < T^1) against the harmonic linear system, on
/// `instances` trees of depth at most `max_depth`.
pub fn oracle_sweep(
    law: &Arc<EnvironmentLaw>,
    instances: usize,
    max_depth: u32,
    seed: u64,
    exec: Execution,
) -> Result<Vec<OracleRow>, Error> {
    if max_depth == 0 {
        return Err(Error::InvalidArgument("oracle depth must be positive".into()));
    }
    map_indexed(exec, instances, |i| {
        let mut rng = stream(seed, "oracle", i as u64);
        let depth = rng.random_range(1..=max_depth);
        let tree = MarkedTree::generate(law.clone(), depth, derive_seed(seed, "oracle-tree", i as u64))?;
        let x = NodeId(rng.random_range(1..tree.len() as u32));
        let path = tree.path(x);
        let z = path[rng.random_range(0..path.len())];
        let closed_form = hit_before_return(&tree, z, x)?;
        let oracle = hit_before_return_oracle(&tree, z, x)?;
        Ok(OracleRow {
            instance: i,
            depth,
            vertices: tree.len(),
            target: x.0,
            target_generation: tree.generation(x),
            start: z.0,
            closed_form,
            oracle,
            deviation: (closed_form - oracle).abs(),
        })
    })
    .into_iter()
    .collect()
}

pub fn oracle(config: &Config, instances: usize, depth: u32, exec: Execution) -> Result<Outcome, Error> {
    let law = law_of(config)?;
    let rows = oracle_sweep(&law, instances, depth, config.experiment.seed, exec)?;
    let mut csv = String::from("instance,depth,vertices,target,target_generation,start,closed_form,oracle,deviation\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.instance, r.depth, r.vertices, r.target, r.target_generation, r.start, r.closed_form, r.oracle, r.deviation
        )
        .unwrap();
    }
    let max = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let summary = format!("max deviation: {max:e} over {} instances (tolerance {ORACLE_TOLERANCE:e})\n", rows.len());
    let failed_check = (max >= ORACLE_TOLERANCE).then(|| format!("max deviation {max:e} exceeds {ORACLE_TOLERANCE:e}"));
    Ok(Outcome { artifacts: vec![Artifact::text("oracle.csv".into(), csv)], summary, failed_check })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_index_table() {
        assert_eq!(moment_indices(2), vec![vec![1], vec![2], vec![1, 1]]);
        assert_eq!(moment_indices(3).len(), 7);
    }

    #[test]
    fn oracle_rows_agree() {
        let law = Arc::new(EnvironmentLaw::reference());
        let rows = oracle_sweep(&law, 20, 6, 3, Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 20);
        assert!(rows.iter().all(|r| r.depth <= 6 && r.deviation < ORACLE_TOLERANCE));
        assert_eq!(rows, oracle_sweep(&law, 20, 6, 3, Execution::Parallel).unwrap());
    }

    #[test]
    fn trend_table_has_one_line_per_row() {
        let mut c = Config::default();
        c.experiment.replicas = 3;
        c.experiment.c_infinity_replicas = 500;
        c.experiment.limit_level = 5;
        let out = verify(&c, "genth1", &[100, 400], Execution::Sequential).unwrap();
        let csv = std::str::from_utf8(&out.artifacts[1].bytes).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next(), Some(TREND_HEADER));
    }
}
