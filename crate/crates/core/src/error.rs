use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("rotation angle {angle} rad is too close to pi for a unique logarithm")]
    DegenerateRotation { angle: f64 },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("curvature {kappa} m^-1 outside the supported range [{min}, {max}]")]
    CurvatureRange { kappa: f64, min: f64, max: f64 },

    #[error(
        "boundary solve did not converge at kappa = {kappa} m^-1 after {iterations} iterations \
         (best residual {residual:e})"
    )]
    NonConvergence {
        kappa: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("sample rate {sample_rate} Hz cannot represent a {max_tone} Hz tone")]
    InvalidRate { sample_rate: f64, max_tone: f64 },

    #[error("frequency resolution {resolution} Hz too coarse for tone spacing {spacing} Hz")]
    Resolution { resolution: f64, spacing: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("matrix is ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: malformed WAV: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("model file: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (solver, factorization, integration)
    /// rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::NonConvergence { .. }
                | Error::IllConditioned(_)
                | Error::DegenerateRotation { .. }
        )
    }
}
