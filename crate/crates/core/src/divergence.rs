//! Information-theoretic primitives for measuring ensemble disagreement.
//!
//! All entropies are in nats. Categorical members use Shannon entropy and the
//! Jensen-Shannon divergence; diagonal Gaussian members use quadratic Rényi
//! entropy, whose mixture entropy has a closed form, and the corresponding
//! Jensen-Rényi divergence.

use alloc::format;
use alloc::vec::Vec;

use crate::math::{exp, ln, log_sum_exp};
use crate::{Error, Result};

/// Tolerance on the total mass accepted by [`CategoricalDist::new`].
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Divergences with magnitude below this are reported as exactly zero.
pub const ZERO_CLAMP: f64 = 1e-9;

/// A probability vector over `K >= 1` outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    probs: Vec<f64>,
}

impl CategoricalDist {
    /// Validates and renormalizes `probs`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::validation("categorical distribution needs at least one outcome"));
        }
        let mut sum = 0.0;
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::validation(format!("probability {k} is {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::validation(format!("probabilities sum to {sum}")));
        }
        let mut probs = probs;
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { probs })
    }

    /// All mass on outcome `k` of `n`.
    pub fn point_mass(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::validation(format!("outcome {k} out of range for {n} outcomes")));
        }
        let mut probs = alloc::vec![0.0; n];
        probs[k] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("categorical distribution needs at least one outcome"));
        }
        Ok(Self {
            probs: alloc::vec![1.0 / n as f64; n],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF sample from a uniform draw `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last = k;
                acc += p;
                if u < acc {
                    return k;
                }
            }
        }
        last
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

/// A Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDiag {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl GaussianDiag {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(Error::validation(format!(
                "mean has dimension {} but variance has {}",
                mean.len(),
                var.len()
            )));
        }
        if let Some((k, m)) = mean.iter().enumerate().find(|(_, m)| !m.is_finite()) {
            return Err(Error::validation(format!("mean {k} is {m}")));
        }
        if let Some((k, v)) = var.iter().enumerate().find(|(_, &v)| !(v.is_finite() && v > 0.0)) {
            return Err(Error::validation(format!("variance {k} is {v}, must be positive")));
        }
        Ok(Self { mean, var })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Pulls predicted variances toward an upper bound: `Σ̂ = Σ_U − λ(Σ_U − Σ)`.
///
/// `lambda = 1` keeps the model's variances, `lambda = 0` replaces them with
/// the bound, which makes the divergence depend on the means only.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarianceTempering {
    lambda: f64,
    sigma_upper: Vec<f64>,
}

impl VarianceTempering {
    pub fn new(lambda: f64, sigma_upper: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::validation(format!("lambda {lambda} outside [0, 1]")));
        }
        if sigma_upper.is_empty() || sigma_upper.iter().any(|&u| !(u.is_finite() && u > 0.0)) {
            return Err(Error::validation("variance upper bounds must be positive"));
        }
        Ok(Self { lambda, sigma_upper })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_upper(&self) -> &[f64] {
        &self.sigma_upper
    }
}

/// Shannon entropy `−Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy_categorical(p: &CategoricalDist) -> f64 {
    -p.probs
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * ln(x))
        .sum::<f64>()
}

/// Entropy of the average minus the average entropy.
///
/// Evaluated as the mean KL divergence of each member from the mixture,
/// which is algebraically identical and avoids cancelling two large entropies.
pub fn jsd_categorical(dists: &[CategoricalDist]) -> Result<f64> {
    let first = dists
        .first()
        .ok_or_else(|| Error::validation("divergence of an empty set"))?;
    let k = first.len();
    if let Some(d) = dists.iter().find(|d| d.len() != k) {
        return Err(Error::validation(format!(
            "support sizes differ: {} vs {}",
            k,
            d.len()
        )));
    }
    let n = dists.len() as f64;
    let mut mixture = alloc::vec![0.0; k];
    for d in dists {
        for (m, &p) in mixture.iter_mut().zip(&d.probs) {
            *m += p;
        }
    }
    mixture.iter_mut().for_each(|m| *m /= n);

    let mut total = 0.0;
    for d in dists {
        for (&p, &m) in d.probs.iter().zip(&mixture) {
            if p > 0.0 {
                total += p * ln(p / m);
            }
        }
    }
    Ok(clamp_divergence(total / n))
}

fn check_dims(gi: &GaussianDiag, gj: &GaussianDiag) -> Result<()> {
    if gi.dim() != gj.dim() {
        return Err(Error::validation(format!(
            "Gaussian dimensions differ: {} vs {}",
            gi.dim(),
            gj.dim()
        )));
    }
    Ok(())
}

/// `ln D(N_i, N_j) = −½ (p + q)` with `p = Δᵀ Ω⁻¹ Δ`, `q = ln |Ω|`,
/// `Ω = Σ_i + Σ_j`, `Δ = μ_j − μ_i`.
pub fn log_pairwise_gaussian_kernel(gi: &GaussianDiag, gj: &GaussianDiag) -> Result<f64> {
    check_dims(gi, gj)?;
    Ok(log_kernel_unchecked(gi, gj))
}

#[inline]
fn log_kernel_unchecked(gi: &GaussianDiag, gj: &GaussianDiag) -> f64 {
    let mut p = 0.0;
    let mut q = 0.0;
    for k in 0..gi.dim() {
        let omega = gi.var[k] + gj.var[k];
        let delta = gj.mean[k] - gi.mean[k];
        p += delta * delta / omega;
        q += ln(omega);
    }
    -0.5 * (p + q)
}

/// `|Ω|^{-1/2} exp(−½ Δᵀ Ω⁻¹ Δ)`, evaluated in log space.
pub fn pairwise_gaussian_kernel(gi: &GaussianDiag, gj: &GaussianDiag) -> Result<f64> {
    log_pairwise_gaussian_kernel(gi, gj).map(exp)
}

/// Jensen-Rényi divergence (quadratic Rényi entropy) of an equally weighted
/// Gaussian mixture:
///
/// `−ln[(1/N²) Σ_ij D(N_i, N_j)] − (1/N) Σ_i ln|Σ_i| / 2 − d ln 2 / 2`.
///
/// The pairwise sum is accumulated with log-sum-exp over `ln D`. Results
/// within [`ZERO_CLAMP`] of zero are returned as exactly zero.
///
/// Unlike the Shannon case this quantity is not sign-definite: members whose
/// variances differ by orders of magnitude can drive it below zero, and the
/// signed value is returned as is. Utilities built on top clamp at zero.
pub fn jrd_gaussians(gs: &[GaussianDiag]) -> Result<f64> {
    let first = gs
        .first()
        .ok_or_else(|| Error::validation("divergence of an empty set"))?;
    for g in gs {
        check_dims(first, g)?;
    }
    let n = gs.len();
    let d = first.dim();

    let mut log_kernels = Vec::with_capacity(n * n);
    for gi in gs {
        for gj in gs {
            log_kernels.push(log_kernel_unchecked(gi, gj));
        }
    }
    let nf = n as f64;
    let mixture_term = -(log_sum_exp(&log_kernels) - 2.0 * ln(nf));
    let mean_log_det = gs
        .iter()
        .map(|g| g.var.iter().map(|&v| ln(v)).sum::<f64>())
        .sum::<f64>()
        / nf;
    let jrd = mixture_term - 0.5 * mean_log_det - 0.5 * d as f64 * core::f64::consts::LN_2;
    if !jrd.is_finite() {
        return Err(Error::numeric(format!(
            "Jensen-Rényi divergence is {jrd} (mixture term {mixture_term}, mean log-det {mean_log_det})"
        )));
    }
    Ok(if jrd.abs() < ZERO_CLAMP { 0.0 } else { jrd })
}

/// Replaces each variance by `Σ_U − λ(Σ_U − Σ)`; means are untouched.
pub fn rescale_variances(gs: &[GaussianDiag], t: &VarianceTempering) -> Result<Vec<GaussianDiag>> {
    gs.iter()
        .map(|g| {
            if g.dim() != t.sigma_upper.len() {
                return Err(Error::validation(format!(
                    "tempering bound has dimension {} but Gaussian has {}",
                    t.sigma_upper.len(),
                    g.dim()
                )));
            }
            let var = g
                .var
                .iter()
                .zip(&t.sigma_upper)
                .enumerate()
                .map(|(k, (&v, &u))| {
                    if v > u {
                        Err(Error::validation(format!(
                            "variance {k} is {v}, above its bound {u}"
                        )))
                    } else {
                        Ok(t.lambda * v + (1.0 - t.lambda) * u)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GaussianDiag {
                mean: g.mean.clone(),
                var,
            })
        })
        .collect()
}

fn clamp_divergence(x: f64) -> f64 {
    if x < ZERO_CLAMP {
        0.0
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::LN_2;

    fn cat(p: &[f64]) -> CategoricalDist {
        CategoricalDist::new(p.to_vec()).unwrap()
    }

    fn g(mean: f64, var: f64) -> GaussianDiag {
        GaussianDiag::new(vec![mean], vec![var]).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_categorical(&cat(&[1.0, 0.0])), 0.0);
        assert!((entropy_categorical(&cat(&[0.5, 0.5])) - LN_2).abs() < 1e-12);
        let h = entropy_categorical(&cat(&[2.0 / 3.0, 1.0 / 3.0]));
        assert!((h - 0.636514).abs() < 1e-6, "{h}");
    }

    #[test]
    fn invalid_distributions_are_rejected() {
        assert!(matches!(CategoricalDist::new(vec![-0.1, 1.1]), Err(Error::Validation(_))));
        assert!(matches!(CategoricalDist::new(vec![0.5, 0.4]), Err(Error::Validation(_))));
        assert!(CategoricalDist::new(vec![]).is_err());
        // within tolerance: accepted and renormalized
        let d = CategoricalDist::new(vec![0.5, 0.5 + 1e-7]).unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd_categorical(&[cat(&[1.0, 0.0]), cat(&[1.0, 0.0])]).unwrap(), 0.0);
        let disjoint = jsd_categorical(&[cat(&[1.0, 0.0]), cat(&[0.0, 1.0])]).unwrap();
        assert!((disjoint - LN_2).abs() < 1e-12);
        let mixed =
            jsd_categorical(&[cat(&[0.5, 0.5]), cat(&[0.5, 0.5]), cat(&[1.0, 0.0])]).unwrap();
        assert!((mixed - 0.174416).abs() < 1e-6, "{mixed}");
    }

    #[test]
    fn jsd_rejects_mismatched_supports() {
        let r = jsd_categorical(&[cat(&[1.0, 0.0]), cat(&[0.2, 0.3, 0.5])]);
        assert!(matches!(r, Err(Error::Validation(_))));
        assert!(jsd_categorical(&[]).is_err());
    }

    #[test]
    fn kernel_examples() {
        let k = pairwise_gaussian_kernel(&g(0.0, 1.0), &g(0.0, 1.0)).unwrap();
        assert!((k - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        let k = pairwise_gaussian_kernel(&g(0.0, 0.5), &g(2.0, 0.5)).unwrap();
        assert!((k - (-2.0f64).exp()).abs() < 1e-12);
        let far = pairwise_gaussian_kernel(&g(0.0, 1.0), &g(1e6, 1.0)).unwrap();
        assert_eq!(far, 0.0);
        let a = GaussianDiag::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            pairwise_gaussian_kernel(&a, &g(0.0, 1.0)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn jrd_examples() {
        let single = GaussianDiag::new(vec![3.0, -1.0], vec![0.3, 2.0]).unwrap();
        assert_eq!(jrd_gaussians(&[single.clone()]).unwrap(), 0.0);
        assert_eq!(jrd_gaussians(&vec![single; 4]).unwrap(), 0.0);
        let far = jrd_gaussians(&[g(0.0, 1.0), g(20.0, 1.0)]).unwrap();
        assert!((far - LN_2).abs() < 1e-4, "{far}");
    }

    #[test]
    fn jrd_can_be_negative_for_very_unequal_variances() {
        let r = jrd_gaussians(&[g(0.0, 1e-6), g(0.0, 1.0)]).unwrap();
        assert!(r < 0.0);
    }

    #[test]
    fn rescale_examples() {
        let gs = [g(0.5, 0.04)];
        let same = rescale_variances(&gs, &VarianceTempering::new(1.0, vec![1.0]).unwrap()).unwrap();
        assert_eq!(same[0].var(), &[0.04]);
        let full = rescale_variances(&gs, &VarianceTempering::new(0.0, vec![1.0]).unwrap()).unwrap();
        assert_eq!(full[0].var(), &[1.0]);
        let tempered =
            rescale_variances(&gs, &VarianceTempering::new(0.1, vec![1.0]).unwrap()).unwrap();
        assert!((tempered[0].var()[0] - 0.904).abs() < 1e-12);
        assert_eq!(tempered[0].mean(), &[0.5]);
    }

    #[test]
    fn rescale_rejects_variance_above_bound() {
        let t = VarianceTempering::new(0.5, vec![1.0]).unwrap();
        assert!(matches!(rescale_variances(&[g(0.0, 2.0)], &t), Err(Error::Validation(_))));
        assert!(VarianceTempering::new(1.5, vec![1.0]).is_err());
        assert!(VarianceTempering::new(0.5, vec![0.0]).is_err());
    }
}
