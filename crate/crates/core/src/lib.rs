//! Simulation and exact analytics for the randomly biased random walk on a
//! marked Galton–Watson tree in the diffusive regime: environments, trees,
//! walks, quenched hitting formulas, genealogies of vertex tuples, generalized
//! ranges and the comparison of Monte Carlo estimates with limit constants.

pub mod environment;
pub mod genealogy;
pub mod error;
pub mod par;
pub mod quenched;
pub mod range;
pub mod rng;
pub mod stats;
pub mod theory;
pub mod tree;
pub mod walk;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
