use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}, line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("duplicate utt_id `{0}`")]
    DuplicateUtterance(String),

    #[error("MOS {mos} of `{utt_id}` is outside [1, 5]")]
    MosOutOfRange { utt_id: String, mos: f64 },

    #[error("utterance `{0}` has no MOS label")]
    MissingMos(String),

    #[error("utterance `{0}` has no transcript")]
    MissingTranscript(String),

    #[error("unknown utterance `{0}`")]
    UnknownUtterance(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid preference label {0}, expected -1, 0 or 1")]
    InvalidLabel(i64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("at least two systems are required, found {0}")]
    TooFewSystems(usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("audio error: {0}")]
    Audio(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("frame rate mismatch: {0} Hz vs {1} Hz")]
    FrameRate(f64, f64),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("spearman correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("prediction row {index} ({pred}) does not match label row ({label})")]
    Misaligned {
        index: usize,
        pred: String,
        label: String,
    },

    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown backbone `{0}`")]
    UnknownBackbone(String),

    #[error("{0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
