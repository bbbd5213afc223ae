use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Grads, Graph, Var};
use super::tensor::Tensor2;
use crate::error::{Result, RscError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    fn apply_graph(self, g: &mut Graph, v: Var) -> Result<Var> {
        match self {
            Activation::Relu => g.relu(v),
            Activation::Tanh => g.tanh(v),
            Activation::Identity => Ok(v),
        }
    }
}

/// Anything owning trainable tensors in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Tensor2>;
    fn params_mut(&mut self) -> Vec<&mut Tensor2>;

    /// Registers every parameter as a graph leaf, in `params()` order.
    fn bind(&self, g: &mut Graph) -> Result<Vec<Var>> {
        self.params().into_iter().map(|p| g.param(p)).collect()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Gradients for the bound parameters, zeros where a parameter did not
    /// reach the loss.
    fn collect_grads(&self, grads: &Grads, bound: &[Var]) -> Vec<Tensor2> {
        self.params()
            .iter()
            .zip(bound)
            .map(|(p, &v)| grads.wrt_or_zeros(v, p.shape()))
            .collect()
    }
}

/// `target ← (1 − τ) target + τ source`.
pub fn polyak_update<P: Parameterized>(target: &mut P, source: &P, tau: f64) {
    for (t, s) in target.params_mut().into_iter().zip(source.params()) {
        for (a, b) in t.data_mut().iter_mut().zip(s.data()) {
            *a = (1.0 - tau) * *a + tau * b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in × out`.
    pub weight: Tensor2,
    /// `1 × out`.
    pub bias: Tensor2,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

impl DenseNet {
    /// Fully connected net with layer widths `sizes` (input first). Hidden
    /// layers use `hidden`, the last layer uses `output`. Weights are
    /// Glorot-uniform, biases zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(RscError::Invalid(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    weight: Tensor2::uniform(w[0], w[1], bound, rng),
                    bias: Tensor2::zeros(1, w[1]),
                    activation: if i + 2 == sizes.len() { output } else { hidden },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(RscError::Invalid("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.weight.cols()) {
                return Err(RscError::Shape(format!("layer {i}: bias {:?}", l.bias.shape())));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(RscError::Shape(format!("layer {i} does not compose with layer {}", i - 1)));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    /// Inference without recording a graph.
    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = h.matmul(&layer.weight)?;
            let cols = h.cols();
            for (i, v) in h.data_mut().iter_mut().enumerate() {
                *v = layer.activation.apply(*v + layer.bias.data()[i % cols]);
            }
        }
        h.check_finite("network output")?;
        Ok(h)
    }

    /// Recorded forward pass; `bound` comes from [`Parameterized::bind`].
    pub fn forward_graph(&self, g: &mut Graph, bound: &[Var], x: Var) -> Result<Var> {
        if bound.len() != 2 * self.layers.len() {
            return Err(RscError::Shape(format!(
                "{} bound tensors for {} layers",
                bound.len(),
                self.layers.len()
            )));
        }
        let mut h = x;
        for (layer, p) in self.layers.iter().zip(bound.chunks(2)) {
            let z = g.matmul(h, p[0])?;
            let z = g.add_row(z, p[1])?;
            h = layer.activation.apply_graph(g, z)?;
        }
        Ok(h)
    }
}

impl Parameterized for DenseNet {
    fn params(&self) -> Vec<&Tensor2> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
