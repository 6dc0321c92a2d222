//! Evaluation environments: the randomized Chain (optionally with a
//! stochastic trap at the left end) and Continuous Mountain Car.

mod chain;
mod mountain_car;

pub use chain::{explored_fraction, ChainConfig, ChainEnv, TransitionTable, LEFT, RIGHT};
pub use mountain_car::{MountainCarConfig, MountainCarEnv, MAX_POSITION, MAX_SPEED, MIN_POSITION};

use crate::space::{Action, ActionSpace, State, StateSpace};
use crate::Result;

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: State,
    pub reward: f64,
    pub done: bool,
}

/// An episodic environment driven one action at a time.
pub trait Environment {
    fn state_space(&self) -> StateSpace;
    fn action_space(&self) -> ActionSpace;
    /// Steps per episode.
    fn horizon(&self) -> usize;
    fn reset(&mut self) -> State;
    fn step(&mut self, action: &Action) -> Result<Step>;
    /// Steps taken in the current episode.
    fn steps_taken(&self) -> usize;
    /// Steps taken since construction, across episodes.
    fn total_steps(&self) -> u64;

    fn remaining_steps(&self) -> usize {
        self.horizon().saturating_sub(self.steps_taken())
    }
}
