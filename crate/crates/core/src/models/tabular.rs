use alloc::vec;
use alloc::vec::Vec;

use crate::divergence::CategoricalDist;
use crate::{Error, Result};

/// Exact count-based next-state model with additive (Laplace) smoothing.
///
/// `P(s' | s, a) = (prior(s, a, s') + count(s, a, s') + α) / Σ_s'' (…)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    n_states: usize,
    n_actions: usize,
    smoothing: f64,
    counts: Vec<f64>,
    prior: Vec<f64>,
}

impl TabularModel {
    pub fn new(n_states: usize, n_actions: usize, smoothing: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::validation("tabular model needs non-empty spaces"));
        }
        if !(smoothing > 0.0) {
            return Err(Error::validation("smoothing must be positive"));
        }
        let len = n_states * n_actions * n_states;
        Ok(Self {
            n_states,
            n_actions,
            smoothing,
            counts: vec![0.0; len],
            prior: vec![0.0; len],
        })
    }

    /// Adds fixed pseudo-counts for `(s, a)`.
    pub fn set_prior(&mut self, s: usize, a: usize, pseudo_counts: &[f64]) -> Result<()> {
        self.check(s, a)?;
        if pseudo_counts.len() != self.n_states || pseudo_counts.iter().any(|&c| c < 0.0) {
            return Err(Error::validation("prior needs one non-negative count per state"));
        }
        let o = self.offset(s, a);
        self.prior[o..o + self.n_states].copy_from_slice(pseudo_counts);
        Ok(())
    }

    pub fn observe(&mut self, s: usize, a: usize, s_next: usize) -> Result<()> {
        self.check(s, a)?;
        if s_next >= self.n_states {
            return Err(Error::validation("next state out of range"));
        }
        let o = self.offset(s, a);
        self.counts[o + s_next] += 1.0;
        Ok(())
    }

    pub fn clear_counts(&mut self) {
        self.counts.fill(0.0);
    }

    pub fn count(&self, s: usize, a: usize) -> f64 {
        let o = self.offset(s, a);
        self.counts[o..o + self.n_states].iter().sum()
    }

    pub fn predict(&self, s: usize, a: usize) -> Result<CategoricalDist> {
        self.check(s, a)?;
        let o = self.offset(s, a);
        let weights: Vec<f64> = (0..self.n_states)
            .map(|k| self.prior[o + k] + self.counts[o + k] + self.smoothing)
            .collect();
        let total: f64 = weights.iter().sum();
        CategoricalDist::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn offset(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::validation("state or action out of range"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unseen_pairs_are_uniform() {
        let m = TabularModel::new(4, 2, 1e-3).unwrap();
        let p = m.predict(2, 1).unwrap();
        assert!(p.probs().iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn counts_converge_to_empirical_frequencies() {
        let mut m = TabularModel::new(3, 2, 1e-3).unwrap();
        let mut prev_err = f64::INFINITY;
        for round in 1..=5 {
            for _ in 0..(10usize.pow(round)) {
                m.observe(0, 0, 1).unwrap();
            }
            for _ in 0..(3 * 10usize.pow(round)) {
                m.observe(0, 0, 2).unwrap();
            }
            let p = m.predict(0, 0).unwrap();
            let err = (p.probs()[1] - 0.25).abs() + (p.probs()[2] - 0.75).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-7);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let mut m = TabularModel::new(3, 2, 1e-3).unwrap();
        assert!(m.observe(3, 0, 0).is_err());
        assert!(m.observe(0, 2, 0).is_err());
        assert!(m.observe(0, 0, 3).is_err());
        assert!(TabularModel::new(3, 2, 0.0).is_err());
    }
}
