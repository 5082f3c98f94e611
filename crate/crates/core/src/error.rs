use thiserror::Error;

use crate::extremal::NormalityVerdict;
use crate::problem::ValidationErrors;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid horizon {0}: must be at least 1")]
    InvalidHorizon(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("support specification has {actual} channels, expected {expected}")]
    ChannelCount { expected: usize, actual: usize },

    #[error("frequency index {index} on channel {channel} is outside 0..{horizon}")]
    FrequencyIndex {
        channel: usize,
        index: usize,
        horizon: usize,
    },

    #[error("evaluator failed at {tag}: {message}")]
    Evaluation { tag: String, message: String },

    #[error("problem specification is invalid:\n{0}")]
    Validation(ValidationErrors),

    #[error("unsupported constraint variant: {0}")]
    Unsupported(String),

    #[error("singular system at stage {stage}")]
    Singular { stage: usize },

    #[error("abnormal regime: {0:?}")]
    AbnormalRegime(NormalityVerdict),

    #[error("trajectory violates the dynamics: residual {residual:e} exceeds {limit:e}")]
    DynamicsResidual { residual: f64, limit: f64 },

    #[error("rank-deficient Newton system at iteration {iteration} (residual {residual:e})")]
    RankDeficient { iteration: usize, residual: f64 },
}

impl Error {
    pub(crate) fn shape(context: &str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context: context.to_string(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
