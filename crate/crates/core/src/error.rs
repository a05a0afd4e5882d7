use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A configuration problem, located by dotted key (`section.key`) and, when
/// the key appears in the source text, its 1-based line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub key: String,
    pub reason: String,
    pub line: Option<usize>,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.key.is_empty()) {
            (Some(line), false) => write!(f, "config line {line}, `{}`: {}", self.key, self.reason),
            (Some(line), true) => write!(f, "config line {line}: {}", self.reason),
            (None, false) => write!(f, "config `{}`: {}", self.key, self.reason),
            (None, true) => write!(f, "config: {}", self.reason),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The integrator produced NaN or infinity, usually because the step is
    /// too coarse for a stiff region of state space.
    #[error("non-finite state encountered ({context})")]
    NonFiniteState { context: String },

    #[error("sensitivity index out of range: s={s}, r={r}, horizon={horizon}")]
    IndexOutOfRange { s: usize, r: usize, horizon: usize },

    #[error("mass matrix is singular (pivot {pivot:e})")]
    SingularMassMatrix { pivot: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("action grid has {count} candidates, limit is {limit}")]
    GridTooLarge { count: usize, limit: usize },

    #[error(transparent)]
    Config(#[from] ParseError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFiniteState {
            context: context.into(),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::NonFiniteState { .. } => "non_finite_state",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::SingularMassMatrix { .. } => "singular_mass_matrix",
            Error::NumericalFailure(_) => "numerical_failure",
            Error::GridTooLarge { .. } => "grid_too_large",
            Error::Config(_) => "config_error",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
        }
    }
}
