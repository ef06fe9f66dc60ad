use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LacError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LacError {
    #[error("non-finite world state at t = {time:.4} s: {what}")]
    NonFiniteState { time: f64, what: String },

    #[error("grasp lost on arm {arm} at t = {time:.4} s")]
    GraspLost { arm: usize, time: f64 },

    #[error("inverse kinematics did not converge for arm {arm} (residual {position_error:.3e} m, {orientation_error:.3e} rad)")]
    IkNoConverge {
        arm: usize,
        position_error: f64,
        orientation_error: f64,
    },

    #[error("observation layout mismatch: {0}")]
    ObservationSpec(String),

    #[error("non-finite loss during update {update}: {detail}")]
    NonFiniteLoss { update: u64, detail: String },

    #[error("replay buffer holds {len} transitions, {requested} requested")]
    BufferUnderfull { len: usize, requested: usize },

    #[error("checkpoint mismatch: {0}")]
    ChecksumMismatch(String),

    #[error("no metrics found under {0}")]
    MissingMetrics(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LacError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        LacError::Io {
            context: context.into(),
            source,
        }
    }

    /// Numeric failures abort a run; the CLI maps them to their own exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            LacError::NonFiniteState { .. } | LacError::NonFiniteLoss { .. }
        )
    }
}
