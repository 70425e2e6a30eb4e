//! Transition matrices, complementary-label generation and dataset splits.

mod dataset;
mod evidence;
mod transition;

pub use dataset::{read_dataset, split_dataset, write_dataset, ComplementaryDataset, SplitSpec};
pub use evidence::{generate_complementary, LabelEvidence};
pub use transition::{effective_sample_size, forward_correct, TransitionMatrix, MAX_CONDITION, ROW_SUM_TOLERANCE};

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("class count {0} is invalid, need K >= 2")]
    InvalidClassCount(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("not a transition matrix: {0}")]
    NotStochastic(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row {row} of M has {nonzero} nonzero entries, cannot draw {requested} distinct labels")]
    InsufficientSupport { row: usize, nonzero: usize, requested: usize },
    #[error("the labeled set is empty")]
    EmptyLabeledSet,
    #[error("invalid label evidence: {0}")]
    InvalidEvidence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
