//! Planning inside a [`SurrogateMdp`](crate::exploration::SurrogateMdp):
//! open-loop MCTS for discrete actions and random shooting with optional
//! cross-entropy refinement for continuous actions.

mod mcts;
mod shooting;

pub use mcts::{mcts_search, MctsConfig, MctsResult};
pub use shooting::{shooting_plan, ShootingConfig, ShootingPlanner};
