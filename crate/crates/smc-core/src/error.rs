use core::fmt;

/// Failure modes shared by every algorithm in the crate.
#[derive(Clone, Debug, PartialEq)]
pub enum SmcError {
    EmptyInput,
    InvalidArgument(&'static str),
    /// Every particle has zero weight at the given step.
    DegenerateWeights { step: usize },
    NonConcave,
    Numerical(&'static str),
    SigmaPointFailure,
    Unsupported(&'static str),
    InvalidReference,
    NegativeWeight { step: usize },
    NanGradient { iter: usize },
}

impl fmt::Display for SmcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmcError::EmptyInput => write!(f, "empty input"),
            SmcError::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            SmcError::DegenerateWeights { step } => write!(f, "all weights vanished at step {step}"),
            SmcError::NonConcave => write!(f, "log-density is not concave at the mode estimate"),
            SmcError::Numerical(m) => write!(f, "numerical failure: {m}"),
            SmcError::SigmaPointFailure => write!(f, "sigma-point covariance is not positive semi-definite"),
            SmcError::Unsupported(m) => write!(f, "unsupported: {m}"),
            SmcError::InvalidReference => write!(f, "reference trajectory has zero target density"),
            SmcError::NegativeWeight { step } => write!(f, "negative weight estimate at step {step}"),
            SmcError::NanGradient { iter } => write!(f, "non-finite gradient at iteration {iter}"),
        }
    }
}

impl core::error::Error for SmcError {}

impl SmcError {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            SmcError::EmptyInput => "empty_input",
            SmcError::InvalidArgument(_) => "invalid_argument",
            SmcError::DegenerateWeights { .. } => "degenerate_weights",
            SmcError::NonConcave => "non_concave",
            SmcError::Numerical(_) => "numerical",
            SmcError::SigmaPointFailure => "sigma_point_failure",
            SmcError::Unsupported(_) => "unsupported",
            SmcError::InvalidReference => "invalid_reference",
            SmcError::NegativeWeight { .. } => "negative_weight",
            SmcError::NanGradient { .. } => "nan_gradient",
        }
    }
}

pub type Result<T> = core::result::Result<T, SmcError>;
