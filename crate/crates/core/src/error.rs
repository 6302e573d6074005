use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("projection value {value} out of range for dimension {dim}")]
    InvalidProjection { value: i64, dim: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid leg list: {0}")]
    InvalidLegs(String),

    #[error("index {index:?} out of bounds for dims {dims:?}")]
    IndexOutOfBounds { index: Vec<usize>, dims: Vec<usize> },

    #[error("non-finite amplitude at {0:?}")]
    NonFinite(Vec<usize>),

    /// Normalization of a tensor without a single nonzero entry.
    #[error("degenerate tensor: every entry is zero")]
    DegenerateTensor,

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown open leg `{0}`")]
    UnknownLeg(String),

    #[error("invalid contraction plan: {0}")]
    InvalidPlan(String),

    /// A half partial trace produced an all-zero vector: no combination
    /// consistent with the fixed variables survives the filters.
    #[error("infeasible: half partial trace of `{0}` vanished")]
    InfeasibleSignal(String),

    #[error("invalid problem spec: field `{field}`: {reason}")]
    Spec { field: String, reason: String },

    #[error("solution counting requires a constraint-only family, got `{0}`")]
    UnsupportedCount(String),

    #[error("count is not an integer: {0}")]
    NonIntegerCount(f64),

    #[error("state space of {states} exceeds the oracle budget of {budget}")]
    BudgetExceeded { states: u128, budget: u128 },

    #[error("assignment has {got} values, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid solver config: {0}")]
    Config(String),

    /// The extracted assignment of a constraint family failed the
    /// independent check.
    #[error("assignment {assignment:?} does not satisfy the `{family}` instance")]
    VerificationFailed {
        family: String,
        assignment: Vec<usize>,
    },
}

impl Error {
    pub(crate) fn spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Spec {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
