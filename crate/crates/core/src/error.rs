use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate residual on task {task}: rss {rss:e} at or below floor {floor:e}")]
    DegenerateResidual { task: usize, rss: f64, floor: f64 },

    #[error("singular design: feature {feature} is collinear with the active set of task {task}")]
    SingularDesign { feature: usize, task: usize },

    #[error("no feature-class map available")]
    NoClassMap,

    #[error("invalid scenario: {0}")]
    Spec(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("fold {fold} lacks both classes for task {task}")]
    FoldTooSmall { fold: usize, task: usize },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("feature `{0}` has no class assignment")]
    MissingClass(String),

    #[error("unsupported format version: {0}")]
    VersionMismatch(String),

    #[error("checksum mismatch: {0}")]
    ChecksumMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
