use thiserror::Error;

use crate::gridfit::GridFunction;
use crate::mlp::MlpModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no estimate available for group {group} (interval [{lo}, {hi}))")]
    MissingEstimate { group: usize, lo: f64, hi: f64 },

    #[error("validation split has no examples in group {group} (interval [{lo}, {hi}))")]
    EmptyValidationGroup { group: usize, lo: f64, hi: f64 },

    #[error("unsupported regularizer: {0}")]
    UnsupportedProfile(String),

    #[error("solver did not converge after {iterations} iterations (gradient sup-norm {grad_norm:.3e})")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        last: Box<GridFunction>,
    },

    #[error("training diverged at step {step}: objective became non-finite")]
    Diverged { step: usize, last_finite: Box<MlpModel> },

    #[error("{failures} of {reps} Monte-Carlo repetitions failed (limit is 10%)")]
    TooManyFailures { failures: usize, reps: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for numerical solver failures (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. } | Error::Diverged { .. } | Error::TooManyFailures { .. }
        )
    }
}
