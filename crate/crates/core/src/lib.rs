//! Learning classifiers from complementary ("not this class") labels.
//!
//! * [`diffcore`]: reverse-mode differentiation, MLPs, optimizers.
//! * [`labels`]: transition matrices, label generation, dataset splits.
//! * [`priors`]: class-prior estimation from complementary label frequencies.
//! * [`dcl`]: forward-corrected cross-entropy and the discriminative baseline.
//! * [`ccgan`]: the complementary conditional GAN and its variants.
//! * [`divergence`]: discrete divergences and the identifiability bound checker.
//! * [`harness`]: synthetic data, IDX loading, experiment grids, CSV and SVG output.

pub mod ccgan;
pub mod dcl;
pub mod diffcore;
pub mod divergence;
pub mod harness;
pub mod labels;
pub mod linalg;
pub mod priors;
pub mod seeds;

pub use diffcore::{Graph, MlpSpec, OptimizerConfig, ParamStore, Tensor};
pub use labels::{ComplementaryDataset, LabelEvidence, TransitionMatrix};
pub use priors::SimplexVector;

/// Crate-level error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
    #[error(transparent)]
    Label(#[from] labels::LabelError),
    #[error(transparent)]
    Prior(#[from] priors::PriorError),
    #[error(transparent)]
    Divergence(#[from] divergence::DivergenceError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error("{0}")]
    Invalid(String),
    #[error("training aborted at {stage} step {step}: {reason}")]
    TrainingAborted { stage: String, step: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
