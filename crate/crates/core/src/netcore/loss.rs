use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::mlp::{log_softmax, BatchTape, HeadKind, Mlp};
use crate::math::exp;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Loss {
    /// Negative log-likelihood of a diagonal Gaussian head.
    NllGaussian,
    /// Cross-entropy of a categorical head against a (possibly soft) target.
    CrossEntropy,
    /// Huber loss on a linear head, with transition point `delta`.
    Huber { delta: f64 },
}

impl Loss {
    fn expects(&self) -> HeadKind {
        match self {
            Loss::NllGaussian => HeadKind::GaussianDiag,
            Loss::CrossEntropy => HeadKind::Categorical,
            Loss::Huber { .. } => HeadKind::Linear,
        }
    }
}

/// Inputs and targets stored row-major, with per-sample weights and an
/// optional per-element mask (Huber only; `0` drops an element).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    input_dim: usize,
    target_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    weights: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl Batch {
    pub fn new(input_dim: usize, target_dim: usize) -> Self {
        Self {
            input_dim,
            target_dim,
            inputs: Vec::new(),
            targets: Vec::new(),
            weights: Vec::new(),
            mask: None,
        }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) {
        self.push_weighted(input, target, 1.0);
    }

    pub fn push_weighted(&mut self, input: &[f64], target: &[f64], weight: f64) {
        assert_eq!(input.len(), self.input_dim, "input width");
        assert_eq!(target.len(), self.target_dim, "target width");
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        self.weights.push(weight);
        if let Some(m) = &mut self.mask {
            m.extend(core::iter::repeat_n(1.0, self.target_dim));
        }
    }

    pub fn push_masked(&mut self, input: &[f64], target: &[f64], mask: &[f64]) {
        assert_eq!(mask.len(), self.target_dim, "mask width");
        let filled = self.weights.len() * self.target_dim;
        let m = self.mask.get_or_insert_with(|| vec![1.0; filled]);
        m.extend_from_slice(mask);
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        self.weights.push(1.0);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn input(&self, n: usize) -> &[f64] {
        &self.inputs[n * self.input_dim..(n + 1) * self.input_dim]
    }

    pub fn target(&self, n: usize) -> &[f64] {
        &self.targets[n * self.target_dim..(n + 1) * self.target_dim]
    }

    pub fn weight(&self, n: usize) -> f64 {
        self.weights[n]
    }

    fn mask(&self, n: usize) -> Option<&[f64]> {
        self.mask
            .as_ref()
            .map(|m| &m[n * self.target_dim..(n + 1) * self.target_dim])
    }
}

/// Weighted mean loss over the batch and its gradient with respect to every
/// parameter.
pub fn loss_and_gradient(net: &Mlp, batch: &Batch, loss: Loss) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let spec = net.spec();
    if spec.head != loss.expects() {
        return Err(Error::validation(format!(
            "{loss:?} needs a {:?} head, network has {:?}",
            loss.expects(),
            spec.head
        )));
    }
    let expected_target = match loss {
        Loss::NllGaussian => spec.output_width() / 2,
        _ => spec.output_width(),
    };
    if batch.target_dim != expected_target || batch.input_dim != spec.input_width() {
        return Err(Error::validation(format!(
            "batch is {}→{}, network expects {}→{}",
            batch.input_dim,
            batch.target_dim,
            spec.input_width(),
            expected_target
        )));
    }
    let total_weight: f64 = batch.weights.iter().sum();
    if !(total_weight > 0.0) {
        return Err(Error::validation("batch weights must sum to a positive value"));
    }

    let mut inputs = Vec::with_capacity(batch.inputs.len());
    let mut kept = Vec::with_capacity(batch.len());
    for n in 0..batch.len() {
        if batch.weight(n) != 0.0 {
            inputs.extend_from_slice(batch.input(n));
            kept.push(n);
        }
    }
    let mut tape = BatchTape::default();
    net.forward_batch(&inputs, kept.len(), &mut tape);
    let width = spec.output_width();
    let mut d_all = Vec::with_capacity(kept.len() * width);
    let mut d_out = Vec::new();
    let mut scratch = Vec::new();
    let mut total = 0.0;
    for (row, &n) in tape.output().chunks_exact(width).zip(&kept) {
        let scale = batch.weight(n) / total_weight;
        let sample_loss = sample_loss_grad(
            net,
            loss,
            row,
            batch.target(n),
            batch.mask(n),
            scale,
            &mut d_out,
            &mut scratch,
        );
        total += scale * sample_loss;
        d_all.extend_from_slice(&d_out);
    }
    if !total.is_finite() {
        return Err(Error::numeric(format!("loss is {total}")));
    }
    let mut grad = vec![0.0; net.num_params()];
    net.backward_batch(&tape, &d_all, &mut grad);
    Ok((total, grad))
}

#[allow(clippy::too_many_arguments)]
fn sample_loss_grad(
    net: &Mlp,
    loss: Loss,
    raw: &[f64],
    target: &[f64],
    mask: Option<&[f64]>,
    scale: f64,
    d_out: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) -> f64 {
    d_out.clear();
    match loss {
        Loss::CrossEntropy => {
            log_softmax(raw, scratch);
            let mass: f64 = target.iter().sum();
            let mut l = 0.0;
            for (&lp, &t) in scratch.iter().zip(target) {
                if t != 0.0 {
                    l -= t * lp;
                }
                d_out.push(scale * (mass * exp(lp) - t));
            }
            l
        }
        Loss::NllGaussian => {
            let d = target.len();
            let bounds = net.spec().log_var_bounds;
            let mut l = 0.0;
            d_out.resize(2 * d, 0.0);
            for k in 0..d {
                let mu = raw[k];
                let (lv, dlv) = bounds.squash(raw[d + k]);
                let inv_var = exp(-lv);
                let err = mu - target[k];
                l += 0.5 * (err * err * inv_var + lv + LN_2PI);
                d_out[k] = scale * err * inv_var;
                d_out[d + k] = scale * 0.5 * (1.0 - err * err * inv_var) * dlv;
            }
            l
        }
        Loss::Huber { delta } => {
            let mut l = 0.0;
            for (k, (&z, &y)) in raw.iter().zip(target).enumerate() {
                let m = mask.map_or(1.0, |m| m[k]);
                let e = z - y;
                if m == 0.0 {
                    d_out.push(0.0);
                    continue;
                }
                if e.abs() <= delta {
                    l += m * 0.5 * e * e;
                    d_out.push(scale * m * e);
                } else {
                    l += m * delta * (e.abs() - 0.5 * delta);
                    d_out.push(scale * m * delta * e.signum());
                }
            }
            l
        }
    }
}
