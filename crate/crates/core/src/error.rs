use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input channel {channel} spike times are not sorted ascending")]
    UnsortedInput { channel: usize },

    #[error("input spike time {time} on channel {channel} outside [0, {trial_t}]")]
    InputOutOfTrial {
        channel: usize,
        time: f64,
        trial_t: f64,
    },

    #[error("spike ordinal {k} is not past the {n_trial} ordinary spikes")]
    NotPseudo { k: usize, n_trial: usize },

    #[error("seed references node {0} which is not in the tape")]
    UnknownNode(usize),

    #[error("encoding has no smooth input derivative: {0}")]
    NoInputDerivative(String),

    #[error("non-finite loss at epoch {epoch}, sample {sample}")]
    NonFinite { epoch: usize, sample: usize },

    #[error("covariance factorization failed even with jitter {0}")]
    Factorization(f64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
