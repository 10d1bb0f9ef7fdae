use thiserror::Error;

use crate::dynamics::StepRecord;
use crate::tt::TtTensor;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A rank-adaptive Euler step could not meet its truncation bounds at the
    /// prescribed rank cap.
    #[error("{0}")]
    StepFailure(Box<StepFailure>),

    #[error("malformed IDX data at byte {offset}: {message}")]
    Idx { offset: usize, message: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn is_step_failure(&self) -> bool {
        matches!(self, Error::StepFailure(_))
    }
}

/// Details of a step whose truncation errors exceeded `M_s τ` or `M_r τ²`.
///
/// `state` is the (non-compliant) result the step produced, so callers that
/// only want to record violations can keep integrating. `step` is the index
/// of the failing step within the enclosing integration, when known.
#[derive(Debug, Clone)]
pub struct StepFailure {
    pub step: usize,
    pub record: StepRecord,
    pub state: TtTensor,
    pub partial: Vec<TtTensor>,
}

impl std::fmt::Display for StepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "step {} violated its truncation bounds (inner error {:.3e} > {:.3e} or outer error {:.3e} > {:.3e})",
            self.step,
            self.record.inner_error,
            self.record.inner_bound,
            self.record.outer_error,
            self.record.outer_bound
        )
    }
}
