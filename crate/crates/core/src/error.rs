use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid analysis parameters: {0}")]
    InvalidParams(String),

    #[error("harmonic {harmonic}: top bin at {top_hz:.1} Hz is not below Nyquist ({nyquist:.1} Hz)")]
    Nyquist {
        harmonic: u32,
        top_hz: f64,
        nyquist: f64,
    },

    #[error("audio buffer is empty")]
    EmptyAudio,

    #[error("harmonic {0} is not part of the configured harmonic set")]
    UnknownHarmonic(u32),

    #[error("frequency {freq:.3} Hz is outside the analysis range [{lo:.3}, {hi:.3}) Hz")]
    OutOfRange { freq: f64, lo: f64, hi: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("sample rate mismatch: expected {expected} Hz, got {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("song {song}: part '{part}' has no stems")]
    MissingPart { song: String, part: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("impulse response is empty")]
    EmptyImpulseResponse,

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("feature cache {path:?} is stale or incompatible: {reason}")]
    StaleCache { path: PathBuf, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("time grid is not uniform")]
    NonUniformGrid,

    #[error("nothing to aggregate")]
    EmptyAggregate,

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path:?}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("resampler error: {0}")]
    Resample(String),

    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
