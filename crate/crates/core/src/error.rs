use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("trajectory {id}: only {len} valid samples, need at least 3")]
    TooShort { id: String, len: usize },
    #[error("trajectory {id}: timestamps decrease at sample {index}")]
    NonMonotonicTime { id: String, index: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-positive time step {dt} at index {index}")]
    NonPositiveStep { index: usize, dt: f64 },
    #[error("field `{field}`: unknown category `{value}`")]
    UnknownCategory { field: String, value: String },
    #[error("missing demographic field `{0}`")]
    MissingField(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid cell size {0}")]
    InvalidCellSize(f64),
    #[error("density grid has no visited cell")]
    AllZero,
    #[error("seed ({row}, {col}) lies outside the mask")]
    SeedOutsideMask { row: usize, col: usize },
    #[error("no seeds given")]
    NoSeeds,
    #[error("sample ({x}, {y}) lies outside the grid bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("node id {id} out of range for {node_count} nodes")]
    IdOutOfRange { id: usize, node_count: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("convolution kernel width {0} is even")]
    EvenKernel(usize),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("epsilon component {index} is not positive ({value})")]
    NonPositiveEpsilon { index: usize, value: f64 },
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),

    #[error("synthetic navigator could not reach checkpoint {0}")]
    UnreachableCheckpoint(usize),
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("reports disagree on sample order")]
    OrderMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("channel {channel} out of range (have {available})")]
    ChannelOutOfRange { channel: usize, available: usize },
    #[error("activation map is empty")]
    EmptyMap,

    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
