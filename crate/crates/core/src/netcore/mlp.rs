use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::divergence::{CategoricalDist, GaussianDiag};
use crate::math::{axpy, exp, ln, sigmoid, softplus, sqrt, tanh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Activation {
    Tanh,
    /// `x · sigmoid(x)`
    Swish,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => tanh(z),
            Activation::Swish => z * sigmoid(z),
        }
    }

    /// Derivative from the pre-activation `z` and the activation value `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Swish => {
                let s = sigmoid(z);
                s + a * (1.0 - s)
            }
        }
    }
}

/// How the raw outputs of the last layer are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum HeadKind {
    Linear,
    /// Logits of a categorical distribution.
    Categorical,
    /// First half means, second half log-variances.
    GaussianDiag,
}

/// Bounds on the emitted log-variance of a Gaussian head.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogVarBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for LogVarBounds {
    fn default() -> Self {
        Self {
            min: ln(1e-8),
            max: 0.0,
        }
    }
}

impl LogVarBounds {
    pub fn var_max(&self) -> f64 {
        exp(self.max)
    }

    pub fn var_min(&self) -> f64 {
        exp(self.min)
    }

    /// Smoothly squashes `raw` into `[min, max]` and returns the value with
    /// its derivative. A final hard clamp absorbs rounding at the edges.
    #[inline]
    pub(crate) fn squash(&self, raw: f64) -> (f64, f64) {
        let upper = self.max - softplus(self.max - raw);
        let d_upper = sigmoid(self.max - raw);
        let lower = self.min + softplus(upper - self.min);
        let d_lower = sigmoid(upper - self.min);
        (lower.clamp(self.min, self.max), d_upper * d_lower)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    /// Input width, hidden widths, raw output width.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub head: HeadKind,
    pub log_var_bounds: LogVarBounds,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, head: HeadKind) -> Self {
        Self {
            widths,
            activation,
            head,
            log_var_bounds: LogVarBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::validation("a network needs at least input and output widths"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::validation("layer widths must be positive"));
        }
        if self.head == HeadKind::GaussianDiag && self.output_width() % 2 != 0 {
            return Err(Error::validation(
                "a Gaussian head needs an even output width (means then log-variances)",
            ));
        }
        let b = self.log_var_bounds;
        if !(b.min.is_finite() && b.max.is_finite() && b.min < b.max) {
            return Err(Error::validation("log-variance bounds must satisfy min < max"));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

/// Head-interpreted network output.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Linear(Vec<f64>),
    Categorical(CategoricalDist),
    Gaussian(GaussianDiag),
}

/// Per-layer pre-activations and activations from one forward pass, kept for
/// backpropagation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    pub(crate) acts: Vec<Vec<f64>>,
    pub(crate) pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

impl Mlp {
    /// All parameters zero.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.widths.len() - 1);
        let mut offset = 0;
        for w in spec.widths.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            layers.push(LayerShape {
                inputs,
                outputs,
                weight_offset: offset,
                bias_offset: offset + inputs * outputs,
            });
            offset += inputs * outputs + outputs;
        }
        Ok(Self {
            spec,
            layers,
            params: vec![0.0; offset],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        net.reinitialize(rng);
        Ok(net)
    }

    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &self.layers {
            let limit = sqrt(6.0 / (layer.inputs + layer.outputs) as f64);
            let w = &mut self.params[layer.weight_offset..layer.bias_offset];
            for x in w.iter_mut() {
                *x = limit * (2.0 * rng.random::<f64>() - 1.0);
            }
            self.params[layer.bias_offset..layer.bias_offset + layer.outputs].fill(0.0);
        }
    }

    /// Rebuilds a network from a spec and a flat parameter vector.
    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::validation(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Runs the network and records every layer on `tape`.
    pub fn forward_tape(&self, input: &[f64], tape: &mut Tape) -> Result<()> {
        if input.len() != self.spec.input_width() {
            return Err(Error::validation(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.spec.input_width()
            )));
        }
        let n = self.layers.len();
        tape.acts.resize_with(n + 1, Vec::new);
        tape.pre.resize_with(n, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let x = &head[l];
            let z = &mut tape.pre[l];
            z.clear();
            z.extend_from_slice(&self.params[layer.bias_offset..layer.bias_offset + layer.outputs]);
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    let row = layer.weight_offset + i * layer.outputs;
                    axpy(xi, &self.params[row..row + layer.outputs], z);
                }
            }
            let a = &mut tail[0];
            a.clear();
            if l + 1 < n {
                let act = self.spec.activation;
                a.extend(z.iter().map(|&v| act.apply(v)));
            } else {
                a.extend_from_slice(z);
            }
        }
        Ok(())
    }

    /// Raw outputs of the last layer.
    pub fn forward_raw(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::default();
        self.forward_tape(input, &mut tape)?;
        Ok(tape.acts.pop().unwrap_or_default())
    }

    /// Interprets raw outputs according to the head.
    pub fn interpret(&self, raw: &[f64]) -> Result<Prediction> {
        match self.spec.head {
            HeadKind::Linear => Ok(Prediction::Linear(raw.to_vec())),
            HeadKind::Categorical => Ok(Prediction::Categorical(softmax(raw)?)),
            HeadKind::GaussianDiag => {
                let d = raw.len() / 2;
                let bounds = self.spec.log_var_bounds;
                let var = raw[d..].iter().map(|&r| exp(bounds.squash(r).0)).collect();
                GaussianDiag::new(raw[..d].to_vec(), var).map(Prediction::Gaussian)
            }
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Prediction> {
        let raw = self.forward_raw(input)?;
        self.interpret(&raw)
    }

    /// Runs `rows` inputs stored row-major in `inputs` through the network,
    /// keeping every layer's matrices on `tape` for [`Mlp::backward_batch`].
    pub(crate) fn forward_batch(&self, inputs: &[f64], rows: usize, tape: &mut BatchTape) {
        let n = self.layers.len();
        tape.rows = rows;
        tape.acts.resize_with(n + 1, Vec::new);
        tape.pre.resize_with(n, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(inputs);
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let x = &head[l];
            let z = &mut tape.pre[l];
            let bias = &self.params[layer.bias_offset..layer.bias_offset + layer.outputs];
            z.clear();
            for _ in 0..rows {
                z.extend_from_slice(bias);
            }
            let w = &self.params[layer.weight_offset..layer.bias_offset];
            gemm(rows, layer.inputs, layer.outputs, x, (layer.inputs, 1), w, (layer.outputs, 1), 1.0, z);
            let a = &mut tail[0];
            a.clear();
            if l + 1 < n {
                let act = self.spec.activation;
                a.extend(z.iter().map(|&v| act.apply(v)));
            } else {
                a.extend_from_slice(z);
            }
        }
    }

    /// Accumulates `∂loss/∂params` into `grad` given `∂loss/∂raw_outputs`
    /// (row-major, one row per input) for the pass recorded on `tape`.
    pub(crate) fn backward_batch(&self, tape: &BatchTape, d_out: &[f64], grad: &mut [f64]) {
        let rows = tape.rows;
        let mut delta: Vec<f64> = d_out.to_vec();
        let mut prev = Vec::new();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &tape.acts[l];
            let gb = &mut grad[layer.bias_offset..layer.bias_offset + layer.outputs];
            for row in delta.chunks_exact(layer.outputs) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let gw = &mut grad[layer.weight_offset..layer.bias_offset];
            gemm(layer.inputs, rows, layer.outputs, x, (1, layer.inputs), &delta, (layer.outputs, 1), 1.0, gw);
            if l == 0 {
                break;
            }
            prev.clear();
            prev.resize(rows * layer.inputs, 0.0);
            let w = &self.params[layer.weight_offset..layer.bias_offset];
            gemm(rows, layer.outputs, layer.inputs, &delta, (layer.outputs, 1), w, (1, layer.outputs), 0.0, &mut prev);
            let act = self.spec.activation;
            for ((p, &z), &a) in prev.iter_mut().zip(&tape.pre[l - 1]).zip(x) {
                *p *= act.derivative(z, a);
            }
            core::mem::swap(&mut delta, &mut prev);
        }
    }
}

/// Layer matrices of a batched forward pass, one row per input.
#[derive(Debug, Clone, Default)]
pub(crate) struct BatchTape {
    rows: usize,
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl BatchTape {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// `c = a·b + beta·c` for an `m×k` matrix `a` and a `k×n` matrix `b` given
/// by (row, column) strides; `c` is dense row-major `m×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: a out of bounds");
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: b out of bounds");
    assert!(c.len() >= m * n, "gemm: c out of bounds");
    // SAFETY: every index the kernel touches lies within the slices checked
    // above, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn log_softmax(logits: &[f64], out: &mut Vec<f64>) {
    let lse = crate::math::log_sum_exp(logits);
    out.clear();
    out.extend(logits.iter().map(|&z| z - lse));
}

fn softmax(logits: &[f64]) -> Result<CategoricalDist> {
    let mut lp = Vec::with_capacity(logits.len());
    log_softmax(logits, &mut lp);
    let probs: Vec<f64> = lp.iter().map(|&v| exp(v)).collect();
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::numeric("softmax produced a non-finite probability"));
    }
    CategoricalDist::new(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn zero_network_outputs() {
        let net = Mlp::zeros(MlpSpec::new(vec![3, 4, 2], Activation::Tanh, HeadKind::Linear)).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), Prediction::Linear(vec![0.0, 0.0]));
        let net =
            Mlp::zeros(MlpSpec::new(vec![3, 4, 5], Activation::Swish, HeadKind::Categorical)).unwrap();
        match net.forward(&[1.0, 0.0, 0.0]).unwrap() {
            Prediction::Categorical(p) => {
                assert!(p.probs().iter().all(|&x| (x - 0.2).abs() < 1e-15))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_affine_layer() {
        let spec = MlpSpec::new(vec![1, 1], Activation::Tanh, HeadKind::Linear);
        let net = Mlp::from_params(spec, vec![2.0, 1.0]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), Prediction::Linear(vec![7.0]));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = Mlp::zeros(MlpSpec::new(vec![3, 2], Activation::Tanh, HeadKind::Linear)).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Validation(_))));
        assert!(Mlp::zeros(MlpSpec::new(vec![3, 3], Activation::Tanh, HeadKind::GaussianDiag)).is_err());
    }

    #[test]
    fn gaussian_head_respects_bounds() {
        let spec = MlpSpec::new(vec![1, 2], Activation::Tanh, HeadKind::GaussianDiag);
        let bounds = spec.log_var_bounds;
        for raw in [-1e6, -50.0, -18.0, 0.0, 3.0, 1e6] {
            let net = Mlp::from_params(spec.clone(), vec![0.0, 0.0, 0.0, raw]).unwrap();
            match net.forward(&[0.0]).unwrap() {
                Prediction::Gaussian(g) => {
                    let v = g.var()[0];
                    assert!(v >= bounds.var_min() * (1.0 - 1e-12) && v <= bounds.var_max(), "{raw} -> {v}");
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn init_is_seeded() {
        let spec = MlpSpec::new(vec![4, 8, 3], Activation::Tanh, HeadKind::Linear);
        let a = Mlp::new(spec.clone(), &mut SeedTree::new(1).rng("init")).unwrap();
        let b = Mlp::new(spec.clone(), &mut SeedTree::new(1).rng("init")).unwrap();
        let c = Mlp::new(spec, &mut SeedTree::new(2).rng("init")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
