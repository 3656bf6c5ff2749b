use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("wavefunction is not normalizable: {0}")]
    NotNormalizable(String),

    #[error("exponent overflow while evaluating the wavefunction (log-amplitude {0:.3e})")]
    Overflow(f64),

    #[error("near-node condition: density ratio to peak is e^{log_ratio:.1}")]
    NearNode { log_ratio: f64 },

    #[error("propagation is singular at duration {duration}: {reason}")]
    SingularPropagation { duration: f64, reason: String },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("trajectory {traj_id} aborted at step {step}: {detail}")]
    NumericalAbort { traj_id: u64, step: usize, detail: String },

    #[error("time {t} is not on the recorded grid")]
    OffGrid { t: f64 },

    #[error("bin {bin} holds {count} samples, fewer than the required {required}")]
    UnderpopulatedBin { bin: usize, count: usize, required: usize },

    #[error("invalid experiment preset: {0}")]
    InvalidPreset(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
