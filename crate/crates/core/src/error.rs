use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Location-tagged diagnostic from the model-file reader.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),

    #[error("network has no weighted layers")]
    EmptyNetwork,

    #[error("invalid network: {0}")]
    Invalid(String),

    #[error("layer {layer}: expected {expected} input channels, found {found}")]
    ChannelMismatch {
        layer: usize,
        expected: u64,
        found: u64,
    },

    #[error("layer {layer}: convolution follows a fully connected layer")]
    ConvAfterFc { layer: usize },

    #[error("layer {layer}: output {dim} collapses below 1")]
    ShapeUnderflow { layer: usize, dim: &'static str },

    #[error("layer index {index} out of range for {len} layers")]
    LayerOutOfRange { index: usize, len: usize },

    #[error("plan has {found} entries, network has {expected} layers")]
    PlanLength { expected: usize, found: usize },

    #[error("brute force limited to {max} layers, network has {found}")]
    TooManyLayers { max: usize, found: usize },

    #[error("plan has {plan} levels but topology has {topology}")]
    LevelMismatch { plan: usize, topology: usize },

    #[error("per-accelerator residency {needed} B exceeds capacity {capacity} B")]
    CapacityOverflow { needed: u64, capacity: u64 },

    #[error("precision mismatch: model uses {model} B, hardware {hardware} B")]
    PrecisionMismatch { model: u32, hardware: u32 },

    #[error("invalid route: {0}")]
    Route(String),

    #[error("invalid hardware config: {0}")]
    Hardware(String),

    #[error("unknown zoo network `{name}` (available: {available})")]
    UnknownNetwork { name: String, available: String },

    #[error("step count must be at least 1")]
    ZeroSteps,
}
