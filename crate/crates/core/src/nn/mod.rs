//! A small differentiable-computation core: matrices, a recording tape with
//! reverse-mode gradients, dense networks, optimizers, a binary-edge
//! Gumbel-Softmax sampler and checkpoint files.

pub mod checkpoint;
pub mod dense;
pub mod graph;
pub mod gumbel;
pub mod optim;
pub mod tensor;

pub use dense::{polyak_update, Activation, Dense, DenseNet, Parameterized};
pub use graph::{sigmoid, Grads, Graph, Var};
pub use gumbel::{gumbel_softmax_edge, EdgeLogits, TemperatureSchedule};
pub use optim::{adam_step, Adam, AdamState, Sgd};
pub use tensor::Tensor2;
