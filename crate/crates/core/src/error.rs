use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed feed JSON at byte {offset}: {message}")]
    FeedJson { offset: usize, message: String },

    #[error("invalid CPE URI `{uri}`: {reason}")]
    CpeFormat { uri: String, reason: &'static str },

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("unknown label `{0}` in corpus")]
    UnknownLabel(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("cannot sample {requested} triples from {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("relation `{0}` is already a reverse relation; refusing to augment twice")]
    AlreadyAugmented(String),

    #[error("invalid split ratios {0:?}: must be non-negative and sum to 1")]
    InvalidRatios([f64; 3]),

    #[error("{kind} id {id} out of range (have {size})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        size: usize,
    },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint was trained against a different {which} index")]
    IndexMismatch { which: &'static str },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}
