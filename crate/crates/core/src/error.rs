use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by origin: numeric format violations, shape/graph
/// validation, schedule construction, and I/O on bundle files.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value")]
    NonFinite,

    #[error("accumulator overflow")]
    AccumulatorOverflow,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("layer {layer}: {msg}")]
    Validation { layer: usize, msg: String },

    #[error("layout plan: {0}")]
    Layout(String),

    #[error("plan/schedule mismatch: {0}")]
    PlanMismatch(String),

    #[error("model bundle: {0}")]
    Bundle(String),

    #[error("image input: {0}")]
    Image(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}
