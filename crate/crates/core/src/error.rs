use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("label error: {0}")]
    Label(String),

    #[error("row {row} has zero norm and cannot be normalized")]
    DegenerateFeature { row: usize },

    #[error("fit error: {0}")]
    Fit(String),

    #[error(
        "regularized covariance is ill-conditioned (condition estimate {condition:.3e}); \
         increase the epsilon scale (currently {eps_scale:e})"
    )]
    Conditioning { condition: f64, eps_scale: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular rank-1 adjustment: 1 - p = {denom:e}")]
    SingularAdjustment { denom: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input or usage).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning { .. } | Error::Numerical(_) | Error::SingularAdjustment { .. }
        )
    }
}
