use thiserror::Error;

use crate::tree::NodeId;

/// Everything that can go wrong across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("law calibration failed: {0}")]
    Calibration(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("log-Laplace transform diverges at t = {0}")]
    Domain(f64),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("schedule infeasible at n = {n}: lower generation {lower} exceeds upper generation {upper} (smallest feasible n ~ {min_feasible_n:e})")]
    ScheduleInfeasible {
        n: u64,
        lower: u64,
        upper: u64,
        min_feasible_n: f64,
    },

    #[error("tree would exceed the node cap of {cap} (requested depth {depth})")]
    ResourceCap { cap: usize, depth: u32 },

    #[error("vertex {vertex} at generation {generation} lies on the truncation frontier")]
    DepthExceeded { vertex: NodeId, generation: u32 },

    #[error("step budget of {budget} steps exhausted after {completed} completed excursions")]
    StepBudget { budget: u64, completed: u32 },

    #[error("{ancestor} is not an ancestor-or-equal of {descendant}")]
    Ancestry { ancestor: NodeId, descendant: NodeId },

    #[error("vertex {0} was never visited")]
    UnknownVertex(NodeId),

    #[error("tuple is not in the non-ancestral set: {0}")]
    NotInDelta(String),

    #[error("combinatorial cap: {count:e} tuples exceeds the configured cap {cap:e}")]
    CombinatorialCap { count: f64, cap: f64 },

    #[error("malformed genealogy signature: {0}")]
    Signature(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("empty support: {0}")]
    EmptySupport(String),

    #[error("iterative solver did not converge (residual {residual:e} after {iterations} iterations)")]
    Solver { residual: f64, iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("snapshot parse error at line {line}: {message}")]
    Snapshot { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
