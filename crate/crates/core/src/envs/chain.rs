use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Environment, Step};
use crate::divergence::CategoricalDist;
use crate::models::History;
use crate::rng::{SeedTree, SimRng};
use crate::space::{Action, ActionSpace, State, StateSpace};
use crate::{Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

const LEFT_REWARD: f64 = 0.001;
const RIGHT_REWARD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainConfig {
    pub length: usize,
    /// From state 0 either action leads to state 0 or 1 with equal odds.
    pub trap: bool,
}

impl ChainConfig {
    pub fn new(length: usize) -> Self {
        Self { length, trap: false }
    }

    pub fn with_trap(length: usize) -> Self {
        Self { length, trap: true }
    }

    pub fn episode_length(&self) -> usize {
        self.length + 9
    }
}

/// Chain of `length` states. In roughly half of the states, chosen once per
/// seed, the two actions swap meaning.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    config: ChainConfig,
    swapped: Vec<bool>,
    state: usize,
    steps: usize,
    total: u64,
    rng: SimRng,
}

impl ChainEnv {
    pub fn new(config: ChainConfig, seed: u64) -> Result<Self> {
        if config.length < 2 {
            return Err(Error::validation("chain length must be at least 2"));
        }
        let seeds = SeedTree::new(seed);
        let mut mask_rng = seeds.rng("swap-mask");
        let swapped = (0..config.length).map(|_| mask_rng.random_bool(0.5)).collect();
        Ok(Self {
            config,
            swapped,
            state: 1,
            steps: 0,
            total: 0,
            rng: seeds.rng("trap"),
        })
    }

    pub fn config(&self) -> ChainConfig {
        self.config
    }

    pub fn length(&self) -> usize {
        self.config.length
    }

    pub fn swap_mask(&self) -> &[bool] {
        &self.swapped
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Where `action` leads from `s`, ignoring the trap.
    pub fn intended_next(&self, s: usize, action: usize) -> usize {
        let right = (action == RIGHT) != self.swapped[s];
        if right {
            (s + 1).min(self.config.length - 1)
        } else {
            s.saturating_sub(1)
        }
    }

    /// The action that moves right from `s`.
    pub fn right_action(&self, s: usize) -> usize {
        if self.swapped[s] {
            LEFT
        } else {
            RIGHT
        }
    }

    fn reward(&self, s: usize) -> f64 {
        if s == 0 {
            LEFT_REWARD
        } else if s == self.config.length - 1 {
            RIGHT_REWARD
        } else {
            0.0
        }
    }

    /// Exact next-state distribution of every `(s, a)` pair.
    pub fn transition_table(&self) -> TransitionTable {
        let n = self.config.length;
        let mut rows = Vec::with_capacity(2 * n);
        for s in 0..n {
            for a in [LEFT, RIGHT] {
                let row = if self.config.trap && s == 0 {
                    let mut p = vec![0.0; n];
                    p[0] = 0.5;
                    p[1] = 0.5;
                    CategoricalDist::new(p).expect("valid trap row")
                } else {
                    CategoricalDist::point_mass(n, self.intended_next(s, a)).expect("state in range")
                };
                rows.push(row);
            }
        }
        TransitionTable {
            n_states: n,
            n_actions: 2,
            rows,
        }
    }
}

impl Environment for ChainEnv {
    fn state_space(&self) -> StateSpace {
        StateSpace::Discrete { n: self.config.length }
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { n: 2 }
    }

    fn horizon(&self) -> usize {
        self.config.episode_length()
    }

    fn reset(&mut self) -> State {
        self.state = 1;
        self.steps = 0;
        State::Discrete(1)
    }

    fn step(&mut self, action: &Action) -> Result<Step> {
        if self.steps >= self.horizon() {
            return Err(Error::state("episode is over; call reset"));
        }
        let a = action.index()?;
        if a > 1 {
            return Err(Error::validation(format!("chain action {a} is not 0 or 1")));
        }
        self.state = if self.config.trap && self.state == 0 {
            usize::from(self.rng.random_bool(0.5))
        } else {
            self.intended_next(self.state, a)
        };
        self.steps += 1;
        self.total += 1;
        Ok(Step {
            state: State::Discrete(self.state),
            reward: self.reward(self.state),
            done: self.steps >= self.horizon(),
        })
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn total_steps(&self) -> u64 {
        self.total
    }
}

/// Ground-truth dynamics of a discrete environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    n_states: usize,
    n_actions: usize,
    rows: Vec<CategoricalDist>,
}

impl TransitionTable {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of `(s, a)` pairs.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: usize, a: usize) -> &CategoricalDist {
        &self.rows[s * self.n_actions + a]
    }
}

/// Fraction of the table's `(s, a)` pairs that appear in `history`.
pub fn explored_fraction(table: &TransitionTable, history: &History) -> f64 {
    let seen: BTreeSet<(usize, usize)> = history
        .transitions()
        .iter()
        .filter_map(|t| Some((t.s.index().ok()?, t.a.index().ok()?)))
        .filter(|&(s, a)| s < table.n_states && a < table.n_actions)
        .collect();
    seen.len() as f64 / table.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Transition;

    fn act(a: usize) -> Action {
        Action::Discrete(a)
    }

    #[test]
    fn reset_starts_in_second_state() {
        let mut env = ChainEnv::new(ChainConfig::new(50), 3).unwrap();
        assert_eq!(env.reset(), State::Discrete(1));
        assert_eq!(env.steps_taken(), 0);
    }

    #[test]
    fn same_seed_same_mask() {
        let a = ChainEnv::new(ChainConfig::new(50), 11).unwrap();
        let b = ChainEnv::new(ChainConfig::new(50), 11).unwrap();
        let c = ChainEnv::new(ChainConfig::new(50), 12).unwrap();
        assert_eq!(a.swap_mask(), b.swap_mask());
        assert_ne!(a.swap_mask(), c.swap_mask());
    }

    #[test]
    fn moving_past_the_end_stays_in_place() {
        let mut env = ChainEnv::new(ChainConfig::new(10), 0).unwrap();
        env.reset();
        for _ in 0..8 {
            let a = env.right_action(env.state());
            env.step(&act(a)).unwrap();
        }
        assert_eq!(env.state(), 9);
        let a = env.right_action(9);
        let step = env.step(&act(a)).unwrap();
        assert_eq!(step.state, State::Discrete(9));
        assert_eq!(step.reward, 1.0);
    }

    #[test]
    fn left_edge_reward() {
        let mut env = ChainEnv::new(ChainConfig::new(10), 0).unwrap();
        env.reset();
        let a = 1 - env.right_action(1);
        let step = env.step(&act(a)).unwrap();
        assert_eq!(step.state, State::Discrete(0));
        assert_eq!(step.reward, 0.001);
        let step = env.step(&act(1 - env.right_action(0))).unwrap();
        assert_eq!(step.reward, 0.001);
    }

    #[test]
    fn episode_ends_after_length_plus_nine() {
        let mut env = ChainEnv::new(ChainConfig::new(10), 0).unwrap();
        env.reset();
        for i in 0..19 {
            let step = env.step(&act(i % 2)).unwrap();
            assert_eq!(step.done, i == 18);
        }
        assert!(matches!(env.step(&act(0)), Err(Error::State(_))));
        env.reset();
        assert!(env.step(&act(0)).is_ok());
    }

    #[test]
    fn trap_splits_evenly() {
        let mut env = ChainEnv::new(ChainConfig::with_trap(10), 5).unwrap();
        let mut ones = 0;
        let trials = 10_000;
        for _ in 0..trials {
            env.reset();
            env.state = 0;
            let step = env.step(&act(ones % 2)).unwrap();
            match step.state {
                State::Discrete(1) => ones += 1,
                State::Discrete(0) => {}
                other => panic!("{other:?}"),
            }
        }
        let frac = ones as f64 / trials as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn table_shapes_and_rows() {
        let env = ChainEnv::new(ChainConfig::new(10), 1).unwrap();
        let table = env.transition_table();
        assert_eq!(table.len(), 20);
        for s in 0..10 {
            for a in 0..2 {
                let row = table.row(s, a);
                assert_eq!(row.probs()[env.intended_next(s, a)], 1.0);
            }
        }
        let trap = ChainEnv::new(ChainConfig::with_trap(10), 1).unwrap().transition_table();
        for a in 0..2 {
            let p = trap.row(0, a).probs();
            assert_eq!((p[0], p[1]), (0.5, 0.5));
        }
    }

    #[test]
    fn explored_fraction_counts_distinct_pairs() {
        let env = ChainEnv::new(ChainConfig::new(50), 1).unwrap();
        let table = env.transition_table();
        let mut h = History::new();
        assert_eq!(explored_fraction(&table, &h), 0.0);
        for k in 0..40 {
            let (s, a) = (k / 2, k % 2);
            let t = Transition::new(State::Discrete(s), act(a), State::Discrete(env.intended_next(s, a)));
            h.push(t.clone());
            h.push(t);
        }
        assert!((explored_fraction(&table, &h) - 0.4).abs() < 1e-12);
        for k in 40..100 {
            let (s, a) = (k / 2, k % 2);
            h.push(Transition::new(State::Discrete(s), act(a), State::Discrete(env.intended_next(s, a))));
        }
        assert_eq!(explored_fraction(&table, &h), 1.0);
    }

    #[test]
    fn about_half_the_states_are_swapped() {
        let mut total = 0.0;
        let seeds = 200;
        for seed in 0..seeds {
            let env = ChainEnv::new(ChainConfig::new(50), seed).unwrap();
            total += env.swap_mask().iter().filter(|&&b| b).count() as f64 / 50.0;
        }
        let mean = total / seeds as f64;
        assert!((mean - 0.5).abs() <= 0.05, "{mean}");
    }
}
