use thiserror::Error;

/// Errors produced by the anchor-emo library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid anchor spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scale {0} is not part of the anchor spec")]
    UnknownScale(f64),

    #[error("closed-form invalid: stride/2 = {half_stride} is not below face side {side}")]
    ClosedFormInvalid { side: f64, half_stride: f64 },

    #[error("layout has no anchors")]
    EmptyLayout,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("max-IoU audit failed for face {face}: fast path {fast} vs exhaustive {exhaustive}")]
    AuditMismatch { face: usize, fast: f64, exhaustive: f64 },

    #[error("search space produced no configurations")]
    EmptySearch,
}

pub type Result<T> = std::result::Result<T, Error>;
