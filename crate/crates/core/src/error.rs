use std::path::PathBuf;

use crate::strategy::StageId;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("stage {0} appears more than once in the strategy")]
    DuplicateStage(StageId),
    #[error("unknown stage code {0:?}")]
    UnknownStage(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no shadow-free image for {image_id:?} at {}", path.display())]
    MissingExternal { image_id: String, path: PathBuf },
    #[error("degenerate white point: LMS component {0:e} is below 1e-9")]
    DegenerateWhite(f64),

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("invalid network configuration: {0}")]
    ConfigInvalid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite ({loss}) at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("every image/class pair was undefined; nothing to evaluate")]
    EmptyEvaluation,
    #[error("baseline must be strictly positive, got {0}")]
    ZeroBaseline(f64),

    #[error("strategy must contain at least one stage")]
    EmptyStrategy,
    #[error("report has no baseline (empty strategy) row")]
    MissingBaseline,
    #[error("need at least two evaluated orderings, got {0}")]
    InsufficientOrderings(usize),
    #[error("report schema violation: {0}")]
    Schema(String),

    #[error("COCO parse error: {0}")]
    Parse(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("image file missing: {}", .0.display())]
    MissingImageFile(PathBuf),
    #[error("polygon needs at least 3 vertices, got {0}")]
    DegeneratePolygon(usize),
    #[error("split needs {needed} items but the dataset has {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
