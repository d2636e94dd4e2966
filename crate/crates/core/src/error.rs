use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate box ({x_min}, {y_min}, {x_max}, {y_max}): area must be positive")]
    DegenerateBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("class index {index} out of range (n_classes = {n_classes})")]
    ClassOutOfRange { index: usize, n_classes: usize },

    #[error("targets must be binary, found {0}")]
    NonBinaryTarget(f64),

    #[error("unlabeled image or batch used without pseudo labels")]
    MissingPseudoLabels,

    #[error("cannot schedule batches: {0}")]
    Schedule(String),

    #[error("training aborted at iteration {iteration}: {reason}")]
    Aborted { iteration: usize, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
