use thiserror::Error;

/// Errors raised by the library. Messages carry enough context to locate
/// the offending input (the wave vector, the matrix dimension, ...).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("matrix `{label}` is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { label: String, asymmetry: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("constraint unsatisfiable: {0}")]
    Constraint(String),

    #[error("spectral abscissa {abscissa:e} is nonnegative at |k| = {k_norm:e}")]
    NonDecaying { k_norm: f64, abscissa: f64 },

    #[error("Lyapunov constant search exhausted after {iterations} iterations; worst |k| = {worst_k:e} (violation {violation:e})")]
    TuningExhausted {
        iterations: usize,
        worst_k: f64,
        violation: f64,
        /// Leading eigenvector of the violated Hermitian inequality at the worst k.
        eigenvector: Vec<(f64, f64)>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Error {
    /// Stable snake-case identifier of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::Numerical(_) => "numerical",
            Error::Constraint(_) => "constraint",
            Error::NonDecaying { .. } => "non_decaying",
            Error::TuningExhausted { .. } => "tuning_exhausted",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        arg,
        reason: reason.into(),
    }
}
