use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("DegenerateOutput: {0}")]
    DegenerateOutput(String),
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("InconsistentDimensions: {0}")]
    InconsistentDimensions(String),
    #[error("InvalidFrame: {0}")]
    InvalidFrame(String),
    #[error("BadRatios: {0}")]
    BadRatios(String),
    #[error("EmptyCorpus")]
    EmptyCorpus,
    #[error("BadIndex: {0}")]
    BadIndex(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("ConfigMismatch: {0}")]
    ConfigMismatch(String),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("EmptySequence")]
    EmptySequence,
    #[error("NonFiniteLoss: {0}")]
    NonFiniteLoss(String),
    #[error("IdenticalInputs: images are identical (perfect match)")]
    IdenticalInputs,
    #[error("TooSmall: {0}")]
    TooSmall(String),
}

pub type Result<T> = core::result::Result<T, Error>;
