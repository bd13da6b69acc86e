use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variants are grouped by the stage that raises them. The streaming
/// variants carry the peer address where one is known.
#[derive(Debug, Error)]
pub enum Error {
    // data model / io
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("malformed row in {file} at line {line}: {reason}")]
    MalformedRow {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // signal
    #[error("invalid band {lo}..{hi} Hz at fs={fs} Hz")]
    InvalidBand { lo: f64, hi: f64, fs: f64 },
    #[error("signal too short: {len} samples, need more than {required}")]
    TooShort { len: usize, required: usize },
    #[error("only {good} good channels remain, need at least {required}")]
    TooFewGoodChannels { good: usize, required: usize },
    #[error("band {lo}..{hi} Hz outside spectrum range {min}..{max} Hz")]
    BandOutOfRange { lo: f64, hi: f64, min: f64, max: f64 },

    // features / classifiers
    #[error("epoch has zero variance")]
    DegenerateEpoch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("composite covariance is singular (rank {rank}, need {required})")]
    SingularComposite { rank: usize, required: usize },
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("feature names do not match the model: {0}")]
    NameMismatch(String),
    #[error("pooled feature covariance is degenerate")]
    DegenerateFeatures,

    // evaluation
    #[error("too few windows: {0}")]
    TooFewWindows(String),
    #[error("too few trials: {0}")]
    TooFewTrials(String),
    #[error("need at least 2 participants, got {0}")]
    TooFewParticipants(usize),
    #[error("unknown participant: {0}")]
    UnknownParticipant(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(&'static str),
    #[error("missing modality: {0}")]
    MissingModality(String),

    // configuration
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    // streaming
    #[error("cannot bind {addr}: {reason}")]
    BindFailure { addr: String, reason: String },
    #[error("client {peer} disconnected: {reason}")]
    ClientDisconnect { peer: String, reason: String },
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("model does not match stream: {0}")]
    ModelMismatch(String),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::IoFailure { .. } => "IoFailure",
            Error::InvalidBand { .. } => "InvalidBand",
            Error::TooShort { .. } => "TooShort",
            Error::TooFewGoodChannels { .. } => "TooFewGoodChannels",
            Error::BandOutOfRange { .. } => "BandOutOfRange",
            Error::DegenerateEpoch => "DegenerateEpoch",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::SingularComposite { .. } => "SingularComposite",
            Error::SingleClassTraining => "SingleClassTraining",
            Error::NameMismatch(_) => "NameMismatch",
            Error::DegenerateFeatures => "DegenerateFeatures",
            Error::TooFewWindows(_) => "TooFewWindows",
            Error::TooFewTrials(_) => "TooFewTrials",
            Error::TooFewParticipants(_) => "TooFewParticipants",
            Error::UnknownParticipant(_) => "UnknownParticipant",
            Error::InvalidAlpha(_) => "InvalidAlpha",
            Error::DegenerateVariance(_) => "DegenerateVariance",
            Error::MissingModality(_) => "MissingModality",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::BindFailure { .. } => "BindFailure",
            Error::ClientDisconnect { .. } => "ClientDisconnect",
            Error::ConnectionLost(_) => "ConnectionLost",
            Error::ModelMismatch(_) => "ModelMismatch",
            Error::MalformedFrame(_) => "MalformedFrame",
            Error::Json(_) => "Json",
        }
    }
}
