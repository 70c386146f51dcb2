use thiserror::Error;

/// Errors produced by model construction, the solvers and the CLI plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("slope {0} is positive; only lambda <= 0 is supported")]
    PositiveSlope(f64),

    #[error("distortion {d} outside the open interval ({lo}, {hi})")]
    OutOfRange { d: f64, lo: f64, hi: f64 },

    #[error("distortion {d} >= D_max = {d_max}: the rate is zero")]
    RateZero { d: f64, d_max: f64 },

    #[error("distortion {0} <= 0: use the lossless redundancy function (lossless_f)")]
    Lossless(f64),

    #[error("could not bracket Lambda'(lambda) = {d}: {reason}")]
    NotBracketed { d: f64, reason: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
