use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative off-diagonal generator entry q[{row}][{col}] = {value}")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("generator row {row} sums to {sum}, expected 0")]
    RowSumViolation { row: usize, sum: f64 },

    #[error("regime intensity lambda[{index}] = {value} is not strictly positive")]
    NonPositiveIntensity { index: usize, value: f64 },

    #[error("initial distribution is not a probability vector: {0}")]
    BadProbabilityVector(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time {t} lies outside the observation window [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("input times are not ordered at index {index}")]
    UnsortedInput { index: usize },

    #[error("invalid exposure function: {0}")]
    InvalidExposure(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("scaled likelihood collapsed at step {k} (c_k = {value})")]
    UnderflowCollapse { k: usize, value: f64 },

    #[error("state {state} received no expected time and cannot be re-estimated")]
    EmptyState { state: usize },

    #[error("{n} claims are too few to identify an order-{order} model")]
    NonIdentifiable { n: usize, order: usize },

    #[error("series of length {len} is too short (need more than {needed})")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("runs test needs values on both sides of the center")]
    DegenerateSigns,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("expected value at index {index} is not strictly positive")]
    NonPositiveExpected { index: usize },

    #[error("window grid does not partition [0, {horizon}]")]
    GridOutsideHorizon { horizon: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable name, used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NegativeOffDiagonal { .. } => "NegativeOffDiagonal",
            Error::RowSumViolation { .. } => "RowSumViolation",
            Error::NonPositiveIntensity { .. } => "NonPositiveIntensity",
            Error::BadProbabilityVector(_) => "BadProbabilityVector",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::OutOfHorizon { .. } => "OutOfHorizon",
            Error::UnsortedInput { .. } => "UnsortedInput",
            Error::InvalidExposure(_) => "InvalidExposure",
            Error::NonFinite(_) => "NonFinite",
            Error::UnderflowCollapse { .. } => "UnderflowCollapse",
            Error::EmptyState { .. } => "EmptyState",
            Error::NonIdentifiable { .. } => "NonIdentifiable",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::ZeroVariance => "ZeroVariance",
            Error::DegenerateSigns => "DegenerateSigns",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::NonPositiveExpected { .. } => "NonPositiveExpected",
            Error::GridOutsideHorizon { .. } => "GridOutsideHorizon",
            Error::Parse { .. } => "ParseError",
            Error::Io(_) => "IoError",
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad
    /// input or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::UnderflowCollapse { .. }
                | Error::EmptyState { .. }
                | Error::ZeroVariance
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
