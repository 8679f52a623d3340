use thiserror::Error;

use crate::domain::{ActionSet, StrategyAction};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("context is terminated; no further actions are allowed")]
    Terminated,

    #[error("attribute count must be at least 1 before predicting a user act")]
    NoAttributes,

    #[error("{0} is not a generation action")]
    NotGeneration(StrategyAction),

    #[error("action {action} is not allowed here; legal actions: {allowed}")]
    IllegalAction {
        action: StrategyAction,
        allowed: ActionSet,
    },

    #[error("terminal reward requires a terminated context")]
    NotTerminated,

    #[error("realized user act is SILENT; an episode samples at least one act before STOP")]
    SilentAtStop,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training diverged at episode {episode}, step {step}: |weight| = {magnitude:e}")]
    Diverged {
        episode: usize,
        step: usize,
        magnitude: f64,
    },

    #[error("unknown policy `{0}` (expected B1..B7 or RL)")]
    UnknownPolicy(String),

    #[error("singular design matrix; collinear columns: {}", .columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("stepwise selection did not converge after {sweeps} sweeps; trace: {}", .trace.join("; "))]
    NoConvergence { sweeps: usize, trace: Vec<String> },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("corpus: {0}")]
    Corpus(String),

    #[error("weights file: {0}")]
    Weights(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
