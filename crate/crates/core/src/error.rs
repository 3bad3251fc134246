use thiserror::Error;

/// Errors raised by the trackfold library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is zero (or below 1e-30)")]
    ZeroNorm,
    #[error("negative component {value} at index {index}")]
    NegativeComponent { index: usize, value: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("empty vector")]
    EmptyVector,
    #[error("not a probability vector: {0}")]
    InvalidProbability(String),
    #[error("track '{0}' has no frames")]
    EmptyTrack(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("aggregation method mismatch: {0} vs {1}")]
    MethodMismatch(String, String),
    #[error("track '{0}' is already a member of the cluster")]
    DuplicateTrack(String),
    #[error("cluster {0} carries no posteriors")]
    MissingPosteriors(usize),
    #[error("no label for track '{0}'")]
    MissingLabel(String),
    #[error("unknown track '{0}'")]
    UnknownTrack(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient tracks: {0}")]
    InsufficientTracks(String),
    #[error("unknown method '{name}'; valid names: {valid}")]
    UnknownMethod { name: String, valid: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{path}:{line}: dimension mismatch: expected {expected} values, found {found}")]
    FileDimensionMismatch {
        path: String,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: duplicate frame {frame} for track '{track}'")]
    DuplicateFrame {
        path: String,
        line: u64,
        track: String,
        frame: i64,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
