//! Reverse-mode differentiation, MLP layers, optimizers and checkpoints.
//!
//! Every trainable object in the crate (classifier, generator, discriminator,
//! learnable transition matrix) is a set of tensors in a [`ParamStore`]
//! evaluated through a [`Graph`].

mod checkpoint;
mod fd;
mod graph;
mod mlp;
mod optim;
mod tensor;

pub use checkpoint::{read_checkpoint, restore, write_checkpoint, MAGIC as CHECKPOINT_MAGIC};
pub use fd::{compare_gradients, finite_difference_grad, GradMismatch};
pub use graph::{Gradients, Graph, NodeId, ParamId, ParamStore, Pick};
pub use mlp::{Activation, Head, Init, Mlp, MlpSpec};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::Tensor;


#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch at {node}: {left:?} vs {right:?}")]
    ShapeMismatch { node: String, left: [usize; 2], right: [usize; 2] },
    #[error("node {node} is not a scalar")]
    NotScalar { node: String },
    #[error("node #{0} has not been evaluated by this graph")]
    UnknownNode(usize),
    #[error("empty tensor at {node}")]
    EmptyInput { node: String },
    #[error("duplicate parameter name '{0}'")]
    DuplicateParam(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
