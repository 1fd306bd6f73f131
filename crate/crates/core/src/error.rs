use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveStd(f64),
    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite value in tensor `{0}` after update")]
    NonFiniteValue(String),
    #[error("softmax over empty logits")]
    EmptyLogits,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("objective returned a non-finite value")]
    NonFiniteObjective,
    #[error("scripted actions invalid: {0}")]
    ScriptedActions(String),
    #[error("action-sequence count {count} exceeds enumeration cap {cap}")]
    EnumerationCap { count: u128, cap: u128 },
    #[error("complexity {complexity} too small for task {task}")]
    ComplexityTooSmall { task: String, complexity: usize },
    #[error("numeric fault: {0}")]
    NumericFault(String),
    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint shape mismatch for `{name}`: file has {found:?}, model expects {expected:?}")]
    CheckpointShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
