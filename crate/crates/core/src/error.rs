use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("coincident positions")]
    CoincidentPositions,

    #[error("invalid slot inputs: {0}")]
    InvalidSlotInputs(String),

    #[error("at least two poses are required, got {0}")]
    TooFewPoses(usize),

    #[error("fixture dimension mismatch: {field} has {got} entries, expected {expected}")]
    FixtureMismatch {
        field: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("unprojected action from uav {uav}: {reason}")]
    UnprojectedAction { uav: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("insufficient buffer: requested {requested}, holding {size}")]
    InsufficientBuffer { requested: usize, size: usize },

    #[error("empty layer spec")]
    EmptySpec,

    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("malformed document: {0}")]
    Document(String),

    #[error("diverged at episode {episode}: {source}")]
    EpisodeDiverged {
        episode: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for numerical divergence, including divergence wrapped with an episode index.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Diverged(_) | Error::EpisodeDiverged { .. })
    }
}
