//! Synthetic data, IDX loading, experiment grids and their CSV/SVG output.

mod config;
mod experiment;
pub mod idx;
pub mod svg;
mod synth;

use std::path::Path;

pub use config::{DataSource, DatasetConfig, ExperimentConfig, Method, TransitionMode};
pub use experiment::{
    build_dataset, prepare_seed, read_results_csv, run_cell, run_experiment, summarize, CellOutcome, ExperimentOutput,
    ResultRow, SeedData, SummaryRow, TrainedModel,
};
pub use idx::{load_idx, IdxError};
pub use svg::{emit_scatter_svg, read_samples_csv, scatter_svg, write_samples_csv, SampleKind, SamplePoint};
pub use synth::{bayes_accuracy_oracle, gen_ring_mixture, GaussianMixtureSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("samples are {dim}-dimensional; scatter plots need 2-D data (skip plotting for this dataset)")]
    NotTwoDimensional { dim: usize },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn csv(path: &Path) -> impl Fn(csv::Error) -> Self + '_ {
        move |source| HarnessError::Csv { path: path.display().to_string(), source }
    }

    pub(crate) fn json(path: &Path) -> impl Fn(serde_json::Error) -> Self + '_ {
        move |source| HarnessError::Json { path: path.display().to_string(), source }
    }
}
