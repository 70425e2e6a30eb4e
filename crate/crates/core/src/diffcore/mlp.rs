use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId, ParamId, ParamStore};
use super::tensor::Tensor;
use super::DiffError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Linear,
    Sigmoid,
}

/// Layer widths from input to output, e.g. `[2, 64, 64, 8]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub head: Head,
}

impl MlpSpec {
    /// Same activation on every hidden layer.
    pub fn uniform(widths: Vec<usize>, activation: Activation, head: Head) -> Self {
        let hidden = widths.len().saturating_sub(2);
        MlpSpec { widths, activations: vec![activation; hidden], head }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        if self.widths.len() < 2 {
            return Err(DiffError::InvalidConfig("an MLP needs an input and at least one layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(DiffError::InvalidConfig("layer widths must be positive".into()));
        }
        if self.activations.len() != self.widths.len() - 2 {
            return Err(DiffError::InvalidConfig(format!(
                "{} hidden layers but {} activations",
                self.widths.len() - 2,
                self.activations.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform on `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`; zero biases.
    Glorot,
    Zeros,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
}

/// Fully connected network whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

impl Mlp {
    /// Registers parameters `{prefix}.{layer}.w` / `{prefix}.{layer}.b`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        spec: MlpSpec,
        init: Init,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.widths.len() - 1);
        for (l, pair) in spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = match init {
                Init::Glorot => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Tensor::from_fn(fan_in, fan_out, |_, _| rng.random_range(-a..=a))
                }
                Init::Zeros => Tensor::zeros(fan_in, fan_out),
            };
            let weight = store.insert(format!("{prefix}.{l}.w"), w)?;
            let bias = store.insert(format!("{prefix}.{l}.b"), Tensor::zeros(1, fan_out))?;
            layers.push(Dense { weight, bias });
        }
        Ok(Mlp { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|d| [d.weight, d.bias]).collect()
    }

    /// Pre-head outputs.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId, DiffError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, dense) in self.layers.iter().enumerate() {
            let w = g.param(store, dense.weight);
            let b = g.param(store, dense.bias);
            h = g.matmul(h, w)?;
            h = g.add_bias(h, b)?;
            if l < last {
                h = match self.spec.activations[l] {
                    Activation::Relu => g.relu(h)?,
                    Activation::LeakyRelu(slope) => g.leaky_relu(h, slope)?,
                    Activation::Tanh => g.tanh(h)?,
                };
            }
        }
        Ok(h)
    }

    /// Outputs after the configured head.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId, DiffError> {
        let z = self.logits(g, store, x)?;
        match self.spec.head {
            Head::Softmax => g.softmax(z),
            Head::Linear => Ok(z),
            Head::Sigmoid => g.sigmoid(z),
        }
    }

    /// Evaluates the network on a batch without keeping the graph.
    pub fn predict(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, DiffError> {
        let mut g = Graph::new();
        let input = g.input_checked("x", x.clone(), self.spec.input_dim())?;
        let out = self.forward(&mut g, store, input)?;
        Ok(g.value(out).clone())
    }
}
