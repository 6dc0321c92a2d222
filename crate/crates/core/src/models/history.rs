use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::space::{Action, State};
use crate::{Error, Result};

/// Lower bound applied to every normalization standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// One experienced `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transition {
    pub s: State,
    pub a: Action,
    pub s_next: State,
}

impl Transition {
    pub fn new(s: State, a: Action, s_next: State) -> Self {
        Self { s, a, s_next }
    }
}

/// Per-feature affine normalization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Mean and (population) standard deviation of `rows`, std floored at
    /// [`STD_FLOOR`].
    pub fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let mut mean = vec![0.0; dim];
        let mut n = 0usize;
        for r in rows.clone() {
            for (m, &x) in mean.iter_mut().zip(r) {
                *m += x;
            }
            n += 1;
        }
        if n == 0 {
            return Self::identity(dim);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(r) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| sqrt(v / n as f64).max(STD_FLOOR))
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(&self.mean).zip(&self.std).map(|((&x, &m), &s)| (x - m) / s));
    }

    pub fn denormalize(&self, z: &[f64], out: &mut Vec<f64>) {
        out.extend(z.iter().zip(&self.mean).zip(&self.std).map(|((&z, &m), &s)| z * s + m));
    }
}

/// Normalization statistics of states, actions and state deltas.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormStats {
    pub state: Normalizer,
    pub action: Normalizer,
    pub delta: Normalizer,
}

/// Append-only record of experienced transitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    transitions: Vec<Transition>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Statistics over exactly the stored transitions (continuous spaces).
    pub fn normalization(&self) -> Result<NormStats> {
        let first = self
            .transitions
            .first()
            .ok_or_else(|| Error::validation("normalization of an empty history"))?;
        let sd = first.s.values()?.len();
        let ad = first.a.values()?.len();
        let mut deltas = Vec::with_capacity(self.transitions.len() * sd);
        for t in &self.transitions {
            let s = t.s.values()?;
            let sn = t.s_next.values()?;
            let a = t.a.values()?;
            if s.len() != sd || sn.len() != sd || a.len() != ad {
                return Err(Error::validation(format!(
                    "transition dimensions differ from the first ({sd}, {ad})"
                )));
            }
            deltas.extend(sn.iter().zip(s).map(|(y, x)| y - x));
        }
        let states = self.transitions.iter().map(|t| t.s.values().unwrap_or(&[]));
        let actions = self.transitions.iter().map(|t| t.a.values().unwrap_or(&[]));
        Ok(NormStats {
            state: Normalizer::fit(sd, states),
            action: Normalizer::fit(ad, actions),
            delta: Normalizer::fit(sd, deltas.chunks_exact(sd)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &[f64], a: f64, sn: &[f64]) -> Transition {
        Transition::new(
            State::Continuous(s.to_vec()),
            Action::Continuous(vec![a]),
            State::Continuous(sn.to_vec()),
        )
    }

    #[test]
    fn stats_come_from_the_stored_transitions() {
        let mut h = History::new();
        h.push(t(&[0.0, 1.0], 1.0, &[1.0, 1.0]));
        h.push(t(&[2.0, 1.0], -1.0, &[2.0, 1.0]));
        let st = h.normalization().unwrap();
        assert_eq!(st.state.mean, vec![1.0, 1.0]);
        assert_eq!(st.state.std, vec![1.0, STD_FLOOR]);
        assert_eq!(st.action.mean, vec![0.0]);
        assert_eq!(st.delta.mean, vec![0.5, 0.0]);
    }

    #[test]
    fn empty_history_has_no_stats() {
        assert!(History::new().normalization().is_err());
    }

    #[test]
    fn normalize_round_trip() {
        let n = Normalizer {
            mean: vec![0.3, -7.0],
            std: vec![0.01, 3.0],
        };
        let x = [1.234, 5.678];
        let mut z = Vec::new();
        n.normalize(&x, &mut z);
        let mut back = Vec::new();
        n.denormalize(&z, &mut back);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
