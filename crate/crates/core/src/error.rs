use thiserror::Error;

/// Errors raised by table construction, measure evaluation and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("table must have at least 2 rows and 2 columns (got {rows}x{cols})")]
    TooSmall { rows: usize, cols: usize },

    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid entry {value:?} at row {row}, column {col}: {reason}")]
    InvalidEntry {
        row: usize,
        col: usize,
        value: String,
        reason: &'static str,
    },

    #[error("table has no observations (all counts are zero)")]
    AllZeroTable,

    #[error("probabilities sum to {sum}, which is not within 1e-6 of 1")]
    SumOutOfTolerance { sum: f64 },

    #[error("expected {expected} cells, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("smoothing parameter must be a finite nonnegative number (got {0})")]
    NegativeAlpha(f64),

    #[error("lambda {lambda} is outside the domain of {measure}")]
    InvalidLambda { measure: &'static str, lambda: f64 },

    #[error("measure requires a square table (got {rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("tables have different dimensions")]
    DimensionMismatch,

    #[error("divergence undefined: cell {index} has p > 0 but q = 0")]
    DivergenceUndefined { index: usize },

    #[error("coefficient undefined: fewer than two rows carry probability mass")]
    DegenerateMarginals,

    #[error("symmetry measure undefined: all probability mass lies on the diagonal")]
    AllDiagonal,

    #[error("derivatives undefined: cell {index} is on the simplex boundary")]
    BoundaryPoint { index: usize },

    #[error("Dirichlet parameter {index} is not positive ({value})")]
    NonPositiveParameter { index: usize, value: f64 },

    #[error("credible level must lie strictly between 0 and 1 (got {0})")]
    InvalidLevel(f64),

    #[error("at least {min} posterior draws are required (got {found})")]
    TooFewDraws { min: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for errors that come from the measure's domain rather than from
    /// malformed input.
    pub fn is_domain_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidLambda { .. }
                | Error::NotSquare { .. }
                | Error::DimensionMismatch
                | Error::DivergenceUndefined { .. }
                | Error::DegenerateMarginals
                | Error::AllDiagonal
                | Error::BoundaryPoint { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
