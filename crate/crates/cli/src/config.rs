//! Experiment configuration: a TOML document with `[law]`, `[schedule]` and
//! `[experiment]` sections. Every key is optional.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use treewalk::environment::{Atom, EnvironmentLaw};
use treewalk::theory::{BandPolicy, DeskConfig};

/// A configuration problem, located when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(src) = &self.source {
            write!(f, "{src}")?;
            if let Some(line) = self.line {
                write!(f, ":{line}")?;
                if let Some(col) = self.column {
                    write!(f, ":{col}")?;
                }
            }
            write!(f, ": ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    /// q = 1/2, a = −0.1, m = 3 with calibrated b.
    #[default]
    Reference,
    TwoPoint,
    TwoPointBoundary,
    Atoms,
    Gaussian,
}

impl fmt::Display for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LawKind::Reference => "reference",
            LawKind::TwoPoint => "two-point",
            LawKind::TwoPointBoundary => "two-point-boundary",
            LawKind::Atoms => "atoms",
            LawKind::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawConfig {
    pub family: LawKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    /// Omitted: calibrated so that ψ(1) = 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<Atom>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub lower_per_log: f64,
    pub lower_offset: f64,
    pub height_per_log: f64,
    pub step_budget_factor: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let band = BandPolicy::default();
        ScheduleConfig {
            lower_per_log: band.lower_per_log,
            lower_offset: band.lower_offset,
            height_per_log: band.height_per_log,
            step_budget_factor: DeskConfig::default().step_budget_factor,
        }
    }
}

impl ScheduleConfig {
    pub fn band(&self) -> BandPolicy {
        BandPolicy {
            lower_per_log: self.lower_per_log,
            lower_offset: self.lower_offset,
            height_per_log: self.height_per_log,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicas: usize,
    pub k: usize,
    pub n: Vec<u64>,
    /// Constraint descriptor, e.g. `one`, `split-by:3`, `lambda:2`.
    pub constraint: String,
    pub limit_level: u32,
    pub max_split: u32,
    pub w_cutoff: f64,
    pub w_max_generation: u32,
    pub c_infinity_truncation: usize,
    pub c_infinity_replicas: usize,
    pub tuple_cap: f64,
    pub final_tolerance: f64,
    /// Tuples sampled per walk by `genealogy`.
    pub samples: usize,
    /// Walk traces written by `simulate`.
    pub traces: usize,
    pub oracle_instances: usize,
    pub oracle_depth: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let desk = DeskConfig::default();
        ExperimentConfig {
            seed: 0,
            replicas: desk.replicas,
            k: 2,
            n: vec![10_000, 100_000, 1_000_000],
            constraint: "split-by:3".into(),
            limit_level: desk.limit_level,
            max_split: desk.max_split,
            w_cutoff: desk.w_cutoff,
            w_max_generation: desk.w_max_generation,
            c_infinity_truncation: desk.c_infinity_truncation,
            c_infinity_replicas: desk.c_infinity_replicas,
            tuple_cap: desk.tuple_cap,
            final_tolerance: desk.final_tolerance,
            samples: 100,
            traces: 1,
            oracle_instances: 100,
            oracle_depth: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub law: LawConfig,
    pub schedule: ScheduleConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source: Some(path.display().to_string()),
            line: None,
            column: None,
            field: None,
            message: e.to_string(),
        })?;
        Self::parse(&text, Some(&path.display().to_string()))
    }

    pub fn parse(text: &str, source: Option<&str>) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unzip();
            ConfigError {
                source: source.map(str::to_string),
                line,
                column,
                field: None,
                message: e.message().to_string(),
            }
        })?;
        config.validate().map_err(|(section, key, message)| ConfigError {
            source: source.map(str::to_string),
            line: locate(text, section, key),
            column: None,
            field: Some(format!("{section}.{key}")),
            message,
        })?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        self.law().map_err(|(key, msg)| ("law", key, msg))?;
        let e = &self.experiment;
        if e.replicas == 0 {
            return Err(("experiment", "replicas", "must be positive".into()));
        }
        if e.k < 2 {
            return Err(("experiment", "k", "must be at least 2".into()));
        }
        if e.n.iter().any(|&n| n < 3) {
            return Err(("experiment", "n", "every n must be at least 3".into()));
        }
        if let Err(err) = treewalk::genealogy::Constraint::parse(&e.constraint) {
            return Err(("experiment", "constraint", err.to_string()));
        }
        let s = &self.schedule;
        if !(s.lower_per_log >= 0.0 && s.height_per_log > 0.0 && s.lower_offset.is_finite()) {
            return Err(("schedule", "height_per_log", "band coefficients must be finite, height positive".into()));
        }
        if s.step_budget_factor == 0 {
            return Err(("schedule", "step_budget_factor", "must be positive".into()));
        }
        Ok(())
    }

    /// The reproduction law, or the offending key with a message.
    pub fn law(&self) -> Result<EnvironmentLaw, (&'static str, String)> {
        let l = &self.law;
        let need = |v: Option<f64>, key: &'static str| v.ok_or((key, format!("required for family {}", l.family)));
        match l.family {
            LawKind::Reference => Ok(EnvironmentLaw::reference()),
            LawKind::TwoPoint => EnvironmentLaw::two_point(
                need(l.q, "q")?,
                need(l.a, "a")?,
                l.m.ok_or(("m", format!("required for family {}", l.family)))?,
                l.b,
            )
            .map_err(|e| ("q", e.to_string())),
            LawKind::TwoPointBoundary => EnvironmentLaw::two_point_boundary(
                need(l.q, "q")?,
                l.m.ok_or(("m", format!("required for family {}", l.family)))?,
            )
            .map_err(|e| ("q", e.to_string())),
            LawKind::Atoms => EnvironmentLaw::atoms(l.atoms.clone().ok_or(("atoms", "required for family atoms".into()))?)
                .map_err(|e| ("atoms", e.to_string())),
            LawKind::Gaussian => {
                let children = l.children.ok_or(("children", "required for family gaussian".to_string()))?;
                let sd = need(l.sd, "sd")?;
                match l.mean {
                    Some(mean) => EnvironmentLaw::gaussian(children, mean, sd),
                    None => EnvironmentLaw::gaussian_calibrated(children, sd),
                }
                .map_err(|e| ("sd", e.to_string()))
            }
        }
    }

    pub fn desk(&self, exec: treewalk::par::Execution) -> DeskConfig {
        let e = &self.experiment;
        DeskConfig {
            band: self.schedule.band(),
            replicas: e.replicas,
            seed: e.seed,
            exec,
            step_budget_factor: self.schedule.step_budget_factor,
            w_cutoff: e.w_cutoff,
            w_max_generation: e.w_max_generation,
            limit_level: e.limit_level,
            max_split: e.max_split,
            c_infinity_truncation: e.c_infinity_truncation,
            c_infinity_replicas: e.c_infinity_replicas,
            tuple_cap: e.tuple_cap,
            final_tolerance: e.final_tolerance,
        }
    }

    /// SHA-256 of the resolved configuration in canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Line of `key = …` inside `[section]`, else the section header's line.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[') {
            current = name.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section || current.starts_with(&format!("{section}.")) {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = Config::parse("", None).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.law().unwrap(), EnvironmentLaw::reference());
    }

    #[test]
    fn full_document() {
        let text = r#"
[law]
family = "two-point"
q = 0.5
a = -0.1
m = 3

[schedule]
lower_per_log = 1.0
height_per_log = 0.5

[experiment]
seed = 7
replicas = 4
n = [100, 1000]
constraint = "lambda:2"
"#;
        let c = Config::parse(text, Some("x.toml")).unwrap();
        assert_eq!(c.experiment.seed, 7);
        assert_eq!(c.experiment.n, vec![100, 1000]);
        assert_eq!(c.law().unwrap(), EnvironmentLaw::reference());
        assert_eq!(c.schedule.band().height_per_log, 0.5);
    }

    #[test]
    fn atoms_family() {
        let text = r#"
[law]
family = "atoms"
[[law.atoms]]
prob = 0.5
displacements = [-0.1]
[[law.atoms]]
prob = 0.5
displacements = [1.2, 1.2, 1.2]
"#;
        let c = Config::parse(text, None).unwrap();
        assert!(c.law().unwrap().is_finite_atom());
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = Config::parse("[experiment]\nseed = 1\nreplicas = \"many\"\n", Some("bad.toml")).unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.to_string().starts_with("bad.toml:3:"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected_with_their_line() {
        let err = Config::parse("[schedule]\nlower_per_log = 1\nheigth_per_log = 2\n", None).unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.message.contains("heigth_per_log"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = Config::parse("[law]\nfamily = \"two-point\"\nq = 0.5\n", Some("c.toml")).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("law.a"));
        assert_eq!(err.line, Some(1));
        let err = Config::parse("[law]\nfamily = \"two-point\"\nq = 1.5\na = 0\nm = 2\n", None).unwrap_err();
        assert_eq!((err.field.as_deref(), err.line), (Some("law.q"), Some(3)));
        let err = Config::parse("[experiment]\n\nconstraint = \"bogus\"\n", None).unwrap_err();
        assert_eq!((err.field.as_deref(), err.line), (Some("experiment.constraint"), Some(3)));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(a.hash(), b.hash());
        b.experiment.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
