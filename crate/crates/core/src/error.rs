use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("token id {token} out of range for alphabet of size {size}")]
    InvalidToken { token: u32, size: u32 },

    #[error("unknown token {word:?} (not in dictionary)")]
    UnknownToken { word: String },

    #[error("invalid probability {0}")]
    InvalidProbability(f64),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid bucket index {index} (partition has {count} buckets)")]
    InvalidBucket { index: usize, count: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid bucket code: {0}")]
    InvalidCode(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("bit stream truncated at bit {position}")]
    TruncatedStream { position: u64 },

    #[error("decode integrity failure at token {position}: {reason}")]
    DecodeIntegrity { position: usize, reason: String },

    #[error("replay source exhausted at position {position} ({records} records)")]
    ReplayUnderrun { position: usize, records: usize },

    #[error("certified perturbation failed: {0}")]
    CertificationFailure(String),

    #[error("invalid rational {0:?}")]
    InvalidRational(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("power-law fit failed: {0}")]
    Fit(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
