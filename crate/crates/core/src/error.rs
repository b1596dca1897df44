use thiserror::Error;

/// Errors raised by ingestion, estimation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient support: {0}")]
    InsufficientSupport(String),

    #[error("coefficient `{0}` is aliased")]
    Aliased(String),

    #[error("unknown coefficient `{0}`")]
    UnknownCoefficient(String),

    #[error("perfect separation on column `{column}`: overlap condition may be violated")]
    Separation { column: String },

    #[error("overlap failure: fitted propensity {value:.6} outside [0.001, 0.999]")]
    Overlap { value: f64 },

    #[error("empty control pool for cell (g={g}, t={t})")]
    EmptyControlPool { g: u32, t: u32 },

    #[error("no reference period for cohort {g} with anticipation {delta}")]
    NoReferencePeriod { g: u32, delta: u32 },

    #[error("optimizer did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("donor `{donor}` is treated at period {period}, before the imputation period")]
    DonorContamination { donor: String, period: u32 },

    #[error("degenerate influence: {0}")]
    DegenerateInfluence(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl Error {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Validation(_) => "validation",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InsufficientSupport(_) => "insufficient_support",
            Error::Aliased(_) => "aliased",
            Error::UnknownCoefficient(_) => "unknown_coefficient",
            Error::Separation { .. } => "separation",
            Error::Overlap { .. } => "overlap",
            Error::EmptyControlPool { .. } => "empty_control_pool",
            Error::NoReferencePeriod { .. } => "no_reference_period",
            Error::NonConvergence { .. } => "non_convergence",
            Error::DonorContamination { .. } => "donor_contamination",
            Error::DegenerateInfluence(_) => "degenerate_influence",
            Error::Dimension(_) => "dimension",
            Error::Numerical(_) => "numerical",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// File path involved, for I/O failures.
    pub fn path(&self) -> Option<&str> {
        match self {
            Error::Io { path, .. } => Some(path),
            _ => None,
        }
    }
}
