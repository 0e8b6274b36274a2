use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("spectrum condition violated: {0}")]
    Spectrum(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("non-finite derivative at t = {t}, component {component}")]
    NonFinite { t: f64, component: usize },

    #[error("Riccati solution blew up at t = {t} (norm {norm:e})")]
    BlowUp { t: f64, norm: f64 },

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from user input rather than a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::Dimension(_) | Error::Json(_) | Error::Csv(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
