//! A small fully connected network trained by backpropagation.
//!
//! Enough to fit the dynamics models (categorical or diagonal-Gaussian heads)
//! and the baseline Q-functions. Parameters are stored as one flat `f64`
//! vector so optimizers, gradient checks and checkpoints all see the same
//! layout: for each layer, the `inputs × outputs` weight block (input-major)
//! followed by the `outputs` biases.

mod loss;
mod mlp;
mod optim;

pub use loss::{loss_and_gradient, Batch, Loss};
pub use mlp::{Activation, HeadKind, LayerShape, LogVarBounds, Mlp, MlpSpec, Prediction, Tape};
pub use optim::{train_step, Optimizer, OptimizerConfig, OptimizerKind};
