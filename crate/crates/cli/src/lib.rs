//! Batch experiment driver: configuration, seeding, replica parallelism and
//! artifact emission for the `treewalk` binary.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use treewalk::par::{set_threads, Execution};

use crate::commands::Outcome;
use crate::config::{Config, ConfigError};
use crate::manifest::{Manifest, Status};

pub const DEFAULT_OUT: &str = "treewalk-out";

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "treewalk", version, about = "Biased random walks on marked Galton-Watson trees")]
pub struct Cli {
    /// TOML file with [law], [schedule] and [experiment] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Worker threads (replicas run in parallel; outputs do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "TREEWALK_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing assumptions for k-tuples.
    Assumptions {
        #[arg(long)]
        k: Option<usize>,
    },
    /// κ, ψ, ĉ_∞, c_0 and the moment table c_j(β).
    Constants {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Walk traces, range slices and generalized ranges.
    Simulate {
        #[arg(long, value_delimiter = ',')]
        n: Vec<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        constraint: Option<String>,
    },
    /// Genealogies and coalescent times of tuples sampled from range slices.
    Genealogy {
        #[arg(long, value_delimiter = ',')]
        n: Vec<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        constraint: Option<String>,
    },
    /// Desk-scale limit check: genth1, genth1bis, genth2, genth5, genth5-quotient, propconv1, genth7.
    Verify {
        theorem: String,
        #[arg(long, value_delimiter = ',')]
        n: Vec<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        constraint: Option<String>,
    },
    /// Closed-form hitting probabilities against a linear-system solve.
    Oracle {
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        depth: Option<u32>,
    },
}

impl Command {
    /// Stem of the manifest file name.
    pub fn name(&self) -> String {
        match self {
            Command::Assumptions { .. } => "assumptions".into(),
            Command::Constants { .. } => "constants".into(),
            Command::Simulate { .. } => "simulate".into(),
            Command::Genealogy { .. } => "genealogy".into(),
            Command::Verify { theorem, .. } => format!("verify-{theorem}"),
            Command::Oracle { .. } => "oracle".into(),
        }
    }
}

enum Failure {
    Config(ConfigError),
    Run(String),
}

impl Cli {
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// The configuration file merged with command-line overrides.
    pub fn resolve_config(&self) -> Result<Config, ConfigError> {
        let mut config = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let e = &mut config.experiment;
        if let Some(seed) = self.seed {
            e.seed = seed;
        }
        if let Some(r) = self.replicas {
            e.replicas = r;
        }
        match &self.command {
            Command::Assumptions { k } | Command::Constants { k } => {
                if let Some(k) = k {
                    e.k = *k;
                }
            }
            Command::Simulate { n, k, constraint }
            | Command::Genealogy { n, k, constraint }
            | Command::Verify { n, k, constraint, .. } => {
                if !n.is_empty() {
                    e.n = n.clone();
                }
                if let Some(k) = k {
                    e.k = *k;
                }
                if let Some(c) = constraint {
                    e.constraint = c.clone();
                }
            }
            Command::Oracle { instances, depth } => {
                if let Some(i) = instances {
                    e.oracle_instances = *i;
                }
                if let Some(d) = depth {
                    e.oracle_depth = *d;
                }
            }
        }
        // Re-validate with the overrides applied.
        let text = toml::to_string(&config).expect("config serializes");
        Config::parse(&text, Some("command line")).map_err(|mut err| {
            err.line = None;
            err.column = None;
            err
        })
    }
}

fn execute(cli: &Cli, config: &Config) -> Result<Outcome, Failure> {
    let exec = Execution::Parallel;
    let e = &config.experiment;
    let run = match &cli.command {
        Command::Assumptions { .. } => commands::assumptions(config),
        Command::Constants { .. } => commands::constants(config, exec),
        Command::Simulate { .. } => commands::simulate(config, &e.n, exec),
        Command::Genealogy { .. } => commands::genealogy(config, &e.n, exec),
        Command::Verify { theorem, .. } => commands::verify(config, theorem, &e.n, exec),
        Command::Oracle { .. } => commands::oracle(config, e.oracle_instances, e.oracle_depth, exec),
    };
    run.map_err(|err| Failure::Run(err.to_string()))
}

fn write_artifacts(dir: &Path, outcome: &Outcome, manifest: &mut Manifest) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in &outcome.artifacts {
        std::fs::write(dir.join(&a.file), &a.bytes)?;
        manifest.record(&a.file, &a.bytes);
    }
    Ok(())
}

/// Run one invocation; the manifest is written whatever happens. Returns the
/// process exit status.
pub fn run(cli: &Cli) -> i32 {
    let dir = cli.out_dir();
    let mut manifest = Manifest::new(&cli.command.name());
    if let Some(t) = cli.threads {
        set_threads(t.max(1));
    }
    let result = cli.resolve_config().map_err(Failure::Config).and_then(|config| {
        manifest = manifest.clone().with_config(&config);
        execute(cli, &config)
    });
    let status = match result {
        Ok(outcome) => match write_artifacts(&dir, &outcome, &mut manifest) {
            Ok(()) => {
                print!("{}", outcome.summary);
                match outcome.failed_check {
                    None => {
                        manifest.status = Status::Ok;
                        EXIT_OK
                    }
                    Some(reason) => {
                        eprintln!("check failed: {reason}");
                        manifest.status = Status::CheckFailed;
                        manifest.reason = Some(reason);
                        EXIT_CHECK_FAILED
                    }
                }
            }
            Err(err) => {
                manifest.reason = Some(format!("writing artifacts: {err}"));
                eprintln!("error: writing artifacts to {}: {err}", dir.display());
                EXIT_ERROR
            }
        },
        Err(Failure::Config(err)) => {
            eprintln!("error: {err}");
            manifest.reason = Some(err.to_string());
            EXIT_CONFIG
        }
        Err(Failure::Run(reason)) => {
            eprintln!("error: {reason}");
            manifest.reason = Some(reason);
            EXIT_ERROR
        }
    };
    if let Err(err) = manifest.write(&dir) {
        eprintln!("error: writing manifest to {}: {err}", dir.display());
        return EXIT_ERROR;
    }
    status
}
