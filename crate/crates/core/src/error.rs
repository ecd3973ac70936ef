use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite derivative of order {order} at x={x:?}, theta={theta:?}, index={index:?}")]
    DerivativeEvaluation {
        order: usize,
        x: Vec<f64>,
        theta: Vec<f64>,
        index: Vec<usize>,
    },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("expectation failed: {0}")]
    Expectation(String),

    #[error("engine {engine} is not valid for sample space {space}")]
    EngineMismatch { engine: String, space: String },

    #[error("Fisher information is not positive definite (min eigenvalue {min_eig:e})")]
    SingularFisher { min_eig: f64 },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("parameter {theta:?} lies outside the regular domain of {model}")]
    Domain { model: String, theta: Vec<f64> },

    #[error("normal-chart tangency violated: residual {residual:e} exceeds {tolerance:e}")]
    TangencyViolation { residual: f64, tolerance: f64 },

    #[error("ill-conditioned fit: condition number {condition:e}")]
    IllConditionedFit { condition: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point lies on the singular stratum (coordinate {coordinate} is zero)")]
    OnSingularStratum { coordinate: usize },

    #[error("leading homogeneous order {order} is odd")]
    OddLeadingOrder { order: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),
}

impl Error {
    /// Stable variant name for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DerivativeEvaluation { .. } => "DerivativeEvaluation",
            Error::Sampling(_) => "Sampling",
            Error::Expectation(_) => "Expectation",
            Error::EngineMismatch { .. } => "EngineMismatch",
            Error::SingularFisher { .. } => "SingularFisher",
            Error::SingularMatrix => "SingularMatrix",
            Error::Domain { .. } => "Domain",
            Error::TangencyViolation { .. } => "TangencyViolation",
            Error::IllConditionedFit { .. } => "IllConditionedFit",
            Error::InvalidInput(_) => "InvalidInput",
            Error::OnSingularStratum { .. } => "OnSingularStratum",
            Error::OddLeadingOrder { .. } => "OddLeadingOrder",
            Error::UnknownModel(_) => "UnknownModel",
        }
    }
}
