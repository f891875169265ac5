use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report. Each variant maps to a stable
/// machine-readable code used by the CLI (`ERROR <code>: ...`) and the
/// HTTP service error bodies.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("resolution {height}x{width} is not a positive 4:3 raster")]
    InvalidResolution { height: usize, width: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("keypoint {index} at ({row}, {col}) lies outside a {height}x{width} raster")]
    KeypointOutOfBounds {
        index: usize,
        row: f64,
        col: f64,
        height: usize,
        width: usize,
    },
    #[error("need at least 2 samples to derange pairings, got {0}")]
    TooFewSamples(usize),
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parsing map has no top-torso pixels; wearing-guide mask is undefined")]
    MissingTorso,
    #[error("mask is {got_h}x{got_w}, expected {want_h}x{want_w}")]
    DimensionError {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("mask value {value} at pixel {index} is not 0 or 1")]
    NonBinaryError { index: usize, value: f64 },
    #[error("lower-body crop needs an even height, got {0}")]
    OddHeight(usize),
    #[error("discriminator score set is empty")]
    EmptyScores,
    #[error("feature layer count mismatch: {real} real vs {fake} fake")]
    LayerCountMismatch { real: usize, fake: usize },
    #[error("loss weight `{name}` is negative ({value})")]
    NegativeWeight { name: String, value: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at step {step} (batch {batch})")]
    DivergedLoss { step: u64, batch: String },
    #[error("thin-plate-spline system is singular: {0}")]
    SingularSystem(String),
    #[error("feature channel mismatch: {0} vs {1}")]
    ChannelMismatch(usize, usize),
    #[error("garment region `{0}` is empty in the ground truth")]
    EmptyTargetRegion(String),
    #[error("model is not initialized: {0}")]
    UninitializedModel(String),
    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    TooSmall {
        height: usize,
        width: usize,
        window: usize,
    },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("output directory is locked by another run: {0}")]
    Locked(PathBuf),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::InvalidResolution { .. } => "InvalidResolution",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::KeypointOutOfBounds { .. } => "KeypointOutOfBounds",
            Error::TooFewSamples(_) => "TooFewSamples",
            Error::UnknownId(_) => "UnknownId",
            Error::CorruptFile { .. } => "CorruptFile",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::MissingTorso => "MissingTorso",
            Error::DimensionError { .. } => "DimensionError",
            Error::NonBinaryError { .. } => "NonBinaryError",
            Error::OddHeight(_) => "OddHeight",
            Error::EmptyScores => "EmptyScores",
            Error::LayerCountMismatch { .. } => "LayerCountMismatch",
            Error::NegativeWeight { .. } => "NegativeWeight",
            Error::EmptyDataset => "EmptyDataset",
            Error::DivergedLoss { .. } => "DivergedLoss",
            Error::SingularSystem(_) => "SingularSystem",
            Error::ChannelMismatch(..) => "ChannelMismatch",
            Error::EmptyTargetRegion(_) => "EmptyTargetRegion",
            Error::UninitializedModel(_) => "UninitializedModel",
            Error::TooSmall { .. } => "TooSmall",
            Error::DimensionMismatch(..) => "DimensionMismatch",
            Error::Config(_) => "ConfigError",
            Error::Locked(_) => "Locked",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

