//! Model-based active exploration.
//!
//! An ensemble of learned forward models defines a surrogate *exploration MDP*
//! whose reward is the disagreement between the members' next-state
//! predictions. Planning in that MDP produces actions that seek out
//! transitions the agent has not yet learned, instead of reacting to novelty
//! after stumbling upon it.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. Experiment
//! orchestration, file formats and the command line live in `max-explore`.
//!
//! Module map:
//!
//! - [`divergence`]: entropies, Jensen-Shannon and Jensen-Rényi divergences
//! - [`netcore`]: a small MLP with backprop, Adam and RMSprop
//! - [`models`]: transitions, history, and the dynamics-model ensemble
//! - [`envs`]: randomized Chain (with optional stochastic trap), Mountain Car
//! - [`exploration`]: the exploration MDP and its utility functions
//! - [`planners`]: open-loop MCTS with Thompson selection, shooting/CEM
//! - [`baselines`]: Q-learning with an oracle bonus, bootstrapped Q-heads

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod divergence;
pub mod envs;
mod error;
pub mod exploration;
pub(crate) mod math;
pub mod models;
pub mod netcore;
pub mod planners;
pub mod rng;
pub mod space;

pub use error::{Error, Result};
pub use space::{Action, ActionSpace, State, StateSpace};
