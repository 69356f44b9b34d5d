use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input value at index {index}")]
    NonFinite { index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("spectrum is not conjugate-symmetric: imaginary residual {residual:e} (relative)")]
    NotHermitian { residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive semi-definite: Cholesky failed with jitter up to {jitter:e}")]
    NotPsd { jitter: f64 },

    #[error("zero-frequency mass too small (|c| = {0:e}); estimator requires f^ft(0) != 0")]
    ZeroMass(f64),

    #[error("non-finite Kotlarski integrand at frequency {0}")]
    NonFiniteIntegrand(f64),

    #[error("vanishing joint characteristic function on ray (|psi| = {0:e} at alpha = {1})")]
    VanishingCf(f64, f64),

    #[error("window ({lo}, {hi}) around an estimated zero leaves the band [0, {band}]")]
    WindowOutsideBand { lo: f64, hi: f64, band: f64 },

    #[error("bandwidth 1/h = {inv_h} exceeds the grid's frequency range {max_freq}; use a finer spatial spacing (at most {required_spacing})")]
    BandTooWide {
        inv_h: f64,
        max_freq: f64,
        required_spacing: f64,
    },

    #[error("unknown preset '{name}'; available presets: {available}")]
    UnknownPreset { name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
