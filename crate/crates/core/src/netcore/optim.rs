use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::loss::{loss_and_gradient, Batch, Loss};
use super::mlp::Mlp;
use crate::math::sqrt;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum OptimizerKind {
    Adam,
    /// RMSprop (smoothing 0.99) with heavy-ball momentum.
    RmsProp { momentum: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// L2 penalty coefficient added to the gradient.
    pub weight_decay: f64,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            weight_decay: 0.0,
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "learning rate {} must be a finite non-negative number",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::validation("weight decay must be non-negative"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::validation("gradient clip must be positive"));
            }
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const RMS_ALPHA: f64 = 0.99;
const RMS_EPS: f64 = 1e-8;

/// Optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            steps: 0,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.steps = 0;
        self.first.fill(0.0);
        self.second.fill(0.0);
    }

    /// Applies one update given a raw gradient.
    pub fn apply(&mut self, params: &mut [f64], mut grad: Vec<f64>) -> Result<()> {
        if grad.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::validation("gradient and parameter sizes differ"));
        }
        let cfg = self.config;
        if cfg.weight_decay > 0.0 {
            for (g, &p) in grad.iter_mut().zip(params.iter()) {
                *g += cfg.weight_decay * p;
            }
        }
        if let Some(clip) = cfg.grad_clip {
            let norm = sqrt(grad.iter().map(|g| g * g).sum());
            if norm > clip {
                let s = clip / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        self.steps += 1;
        let lr = cfg.learning_rate;
        match cfg.kind {
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - libm::pow(ADAM_BETA1, t as f64);
                let c2 = 1.0 - libm::pow(ADAM_BETA2, t as f64);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = ADAM_BETA1 * self.first[i] + (1.0 - ADAM_BETA1) * g;
                    self.second[i] = ADAM_BETA2 * self.second[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m = self.first[i] / c1;
                    let v = self.second[i] / c2;
                    params[i] -= lr * m / (sqrt(v) + ADAM_EPS);
                }
            }
            OptimizerKind::RmsProp { momentum } => {
                for i in 0..params.len() {
                    let g = grad[i];
                    self.second[i] = RMS_ALPHA * self.second[i] + (1.0 - RMS_ALPHA) * g * g;
                    let step = g / (sqrt(self.second[i]) + RMS_EPS);
                    self.first[i] = momentum * self.first[i] + step;
                    params[i] -= lr * self.first[i];
                }
            }
        }
        Ok(())
    }
}

/// One optimizer step on `batch`; returns the mean loss before the update.
pub fn train_step(net: &mut Mlp, opt: &mut Optimizer, batch: &Batch, loss: Loss) -> Result<f64> {
    let (value, grad) = loss_and_gradient(net, batch, loss)?;
    if let Some((i, g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::numeric(format!("gradient of parameter {i} is {g}")));
    }
    opt.apply(net.params_mut(), grad)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{Activation, HeadKind, MlpSpec};
    use crate::rng::SeedTree;

    fn regression_batch() -> Batch {
        let mut b = Batch::new(1, 1);
        for i in 0..10 {
            let x = -1.0 + 2.0 * i as f64 / 9.0;
            b.push(&[x], &[0.5 * x * x - 0.2 + 0.05 * libm::sin(7.0 * x)]);
        }
        b
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let spec = MlpSpec::new(vec![1, 8, 2], Activation::Swish, HeadKind::GaussianDiag);
        let mut net = Mlp::new(spec, &mut SeedTree::new(0).rng("n")).unwrap();
        let before = net.clone();
        let mut opt = Optimizer::new(
            OptimizerConfig {
                weight_decay: 1e-3,
                ..OptimizerConfig::adam(0.0)
            },
            net.num_params(),
        )
        .unwrap();
        let b = regression_batch();
        let l1 = train_step(&mut net, &mut opt, &b, Loss::NllGaussian).unwrap();
        let l2 = train_step(&mut net, &mut opt, &b, Loss::NllGaussian).unwrap();
        assert_eq!(net, before);
        assert_eq!(l1, l2);
    }

    #[test]
    fn nll_training_reduces_loss() {
        let spec = MlpSpec::new(vec![1, 16, 16, 2], Activation::Swish, HeadKind::GaussianDiag);
        let mut net = Mlp::new(spec, &mut SeedTree::new(5).rng("n")).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::adam(1e-2), net.num_params()).unwrap();
        let b = regression_batch();
        let first = train_step(&mut net, &mut opt, &b, Loss::NllGaussian).unwrap();
        let mut last = first;
        for _ in 0..499 {
            last = train_step(&mut net, &mut opt, &b, Loss::NllGaussian).unwrap();
        }
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn rmsprop_with_clip_reduces_huber_loss() {
        let spec = MlpSpec::new(vec![1, 8, 1], Activation::Tanh, HeadKind::Linear);
        let mut net = Mlp::new(spec, &mut SeedTree::new(9).rng("n")).unwrap();
        let cfg = OptimizerConfig {
            kind: OptimizerKind::RmsProp { momentum: 0.9 },
            learning_rate: 1e-3,
            weight_decay: 0.0,
            grad_clip: Some(5.0),
        };
        let mut opt = Optimizer::new(cfg, net.num_params()).unwrap();
        let b = regression_batch();
        let h = Loss::Huber { delta: 1.0 };
        let first = train_step(&mut net, &mut opt, &b, h).unwrap();
        let mut last = first;
        for _ in 0..300 {
            last = train_step(&mut net, &mut opt, &b, h).unwrap();
        }
        assert!(last < first);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let run = || {
            let spec = MlpSpec::new(vec![1, 8, 2], Activation::Swish, HeadKind::GaussianDiag);
            let mut net = Mlp::new(spec, &mut SeedTree::new(11).rng("n")).unwrap();
            let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3), net.num_params()).unwrap();
            let b = regression_batch();
            for _ in 0..25 {
                train_step(&mut net, &mut opt, &b, Loss::NllGaussian).unwrap();
            }
            net
        };
        let (a, b) = (run(), run());
        assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(Optimizer::new(OptimizerConfig::adam(-1.0), 3).is_err());
        let cfg = OptimizerConfig {
            grad_clip: Some(0.0),
            ..OptimizerConfig::adam(1e-3)
        };
        assert!(cfg.validate().is_err());
    }
}
