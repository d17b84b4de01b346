use std::fmt;

use thiserror::Error;

/// Stage of the compositional transform that rejected an input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformStage {
    Normalize,
    Linear,
    Tukey,
}

impl fmt::Display for TransformStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformStage::Normalize => "l2-normalize",
            TransformStage::Linear => "linear",
            TransformStage::Tukey => "tukey",
        })
    }
}

/// Coarse error category, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("weight count {weights} does not match center count {centers}")]
    WeightCount { centers: usize, weights: usize },

    #[error("cardinality mismatch: expected {expected} members, found {found}")]
    CardinalityMismatch { expected: usize, found: usize },

    #[error("singular influence: zero distance with negative exponent")]
    SingularInfluence,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("{stage} stage: {reason}")]
    Transform { stage: TransformStage, reason: String },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("voronoi constraint violated: max |b + |W|^2/4| = {residual:e}")]
    ConstraintViolated { residual: f64 },

    #[error("degenerate episode: {0}")]
    Degenerate(String),

    #[error("invalid episode: {0}")]
    InvalidEpisode(String),

    #[error("bank invariant violated: {0}")]
    Bank(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("malformed binary bank at byte {offset}: {reason}")]
    Binary { offset: usize, reason: String },

    #[error("truncated binary bank: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("pool order mismatch: query cluster was built for a different configuration pool")]
    PoolMismatch,

    #[error("configuration: {0}")]
    Config(String),

    #[error("episode {index}: {source}")]
    Episode {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam { name, reason: reason.into() }
    }

    pub(crate) fn transform(stage: TransformStage, reason: impl Into<String>) -> Self {
        Error::Transform { stage, reason: reason.into() }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorKind::Config,
            Error::InvalidEpisode(_)
            | Error::Bank(_)
            | Error::Parse { .. }
            | Error::Binary { .. }
            | Error::Truncated { .. }
            | Error::Io(_) => ErrorKind::Data,
            Error::Episode { source, .. } => source.kind(),
            _ => ErrorKind::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
