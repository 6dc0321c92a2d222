//! State and action representations shared by environments, models and
//! planners. Discrete spaces index their elements; continuous spaces hold
//! real vectors.

use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum State {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StateSpace {
    Discrete { n: usize },
    Continuous { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ActionSpace {
    Discrete { n: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl State {
    pub fn index(&self) -> Result<usize> {
        match self {
            State::Discrete(i) => Ok(*i),
            State::Continuous(_) => Err(Error::validation("expected a discrete state")),
        }
    }

    pub fn values(&self) -> Result<&[f64]> {
        match self {
            State::Continuous(v) => Ok(v),
            State::Discrete(_) => Err(Error::validation("expected a continuous state")),
        }
    }
}

impl Action {
    pub fn index(&self) -> Result<usize> {
        match self {
            Action::Discrete(i) => Ok(*i),
            Action::Continuous(_) => Err(Error::validation("expected a discrete action")),
        }
    }

    pub fn values(&self) -> Result<&[f64]> {
        match self {
            Action::Continuous(v) => Ok(v),
            Action::Discrete(_) => Err(Error::validation("expected a continuous action")),
        }
    }
}

impl StateSpace {
    pub fn contains(&self, s: &State) -> bool {
        match (self, s) {
            (StateSpace::Discrete { n }, State::Discrete(i)) => i < n,
            (StateSpace::Continuous { dim }, State::Continuous(v)) => v.len() == *dim,
            _ => false,
        }
    }

    /// Number of inputs a model needs to encode a state of this space.
    pub fn encoded_len(&self) -> usize {
        match self {
            StateSpace::Discrete { n } => *n,
            StateSpace::Continuous { dim } => *dim,
        }
    }
}

impl ActionSpace {
    pub fn contains(&self, a: &Action) -> bool {
        match (self, a) {
            (ActionSpace::Discrete { n }, Action::Discrete(i)) => i < n,
            (ActionSpace::Continuous { low, .. }, Action::Continuous(v)) => v.len() == low.len(),
            _ => false,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            ActionSpace::Discrete { n } => *n,
            ActionSpace::Continuous { low, .. } => low.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    /// Uniform random action.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match self {
            ActionSpace::Discrete { n } => Action::Discrete(rng.random_range(0..*n)),
            ActionSpace::Continuous { low, high } => Action::Continuous(
                low.iter()
                    .zip(high)
                    .map(|(&l, &h)| l + (h - l) * rng.random::<f64>())
                    .collect(),
            ),
        }
    }
}
