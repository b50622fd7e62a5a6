use thiserror::Error;

/// Everything that can go wrong in the library and the command line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e}, tolerance {tolerance:e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("eigenvalue iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("design matrix is singular: the covariate second-moment matrix is not positive definite")]
    SingularDesign,

    #[error("degrees of freedom correction needs n > p (n = {n}, p = {p})")]
    DegenerateDof { n: usize, p: usize },

    #[error("estimated variance of coordinate {coord} is zero")]
    ZeroVariance { coord: usize },

    #[error("coordinate {coord} out of range for p = {p}")]
    BadCoordinate { coord: usize, p: usize },

    #[error("numerical integration failed to reach tolerance on [{lo}, {hi}]")]
    IntegrationFailure { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("non-numeric cell at data row {row}, column `{column}`: {value:?}")]
    NonNumericCell { row: usize, column: String, value: String },

    #[error("no usable data")]
    EmptyData,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes and structured error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::BadCoordinate { .. } | Error::Json(_) => ErrorClass::Usage,
            Error::MissingColumn(_)
            | Error::NonNumericCell { .. }
            | Error::EmptyData
            | Error::Csv(_)
            | Error::Io(_)
            | Error::DimensionMismatch(_)
            | Error::NonFinite(_) => ErrorClass::Data,
            Error::NotSymmetric { .. }
            | Error::NotPositiveDefinite
            | Error::NoConvergence { .. }
            | Error::SingularDesign
            | Error::DegenerateDof { .. }
            | Error::ZeroVariance { .. }
            | Error::IntegrationFailure { .. } => ErrorClass::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }

    /// Short stable identifier, used as the `kind` field of JSON error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::SingularDesign => "SingularDesign",
            Error::DegenerateDof { .. } => "DegenerateDof",
            Error::ZeroVariance { .. } => "ZeroVariance",
            Error::BadCoordinate { .. } => "BadCoordinate",
            Error::IntegrationFailure { .. } => "IntegrationFailure",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonNumericCell { .. } => "NonNumericCell",
            Error::EmptyData => "EmptyData",
            Error::Csv(_) => "Csv",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
