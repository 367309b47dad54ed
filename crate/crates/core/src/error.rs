use thiserror::Error;

/// Errors raised by the integrator, bound evaluators, model builders and sweep harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("trajectory grids or dimensions differ: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("alpha = {0} outside [0, 1)")]
    InvalidAlpha(f64),

    #[error("path does not start at zero (norm {0})")]
    BadInitial(f64),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("degenerate sampling box: {0}")]
    DegenerateBox(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl StabilityError {
    /// Stable machine-readable code, used in report status columns.
    pub fn code(&self) -> &'static str {
        match self {
            StabilityError::NonFiniteState { .. } => "NONFINITE_STATE",
            StabilityError::GridMismatch(_) => "GRID_MISMATCH",
            StabilityError::DimMismatch(_) => "DIM_MISMATCH",
            StabilityError::InvalidAlpha(_) => "INVALID_ALPHA",
            StabilityError::BadInitial(_) => "BAD_INITIAL",
            StabilityError::HypothesisViolation(_) => "HYPOTHESIS_VIOLATION",
            StabilityError::DegenerateBox(_) => "DEGENERATE_BOX",
            StabilityError::InvalidInput(_) => "INVALID_INPUT",
            StabilityError::Config(_) => "CONFIG",
        }
    }
}

pub type Result<T> = std::result::Result<T, StabilityError>;
