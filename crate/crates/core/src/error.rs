use thiserror::Error;

/// Errors raised by the solvers, diagnostics and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration could not be parsed or is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A linear system lost diagonal dominance or missed its residual target.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// A single time step produced an inadmissible state.
    #[error("step rejected at t = {time:.6e} (dt = {dt:.3e}): {reason}")]
    StepRejected { time: f64, dt: f64, reason: String },

    /// A run aborted after the retry policy was exhausted.
    #[error("run aborted at t = {time:.6e}: {reason}")]
    RunAborted {
        time: f64,
        reason: String,
        /// CSV dump of the last accepted state.
        dump: String,
    },

    /// Two series or fields do not share a common frame.
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
