use alloc::format;
use alloc::vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Environment, Step};
use crate::math::cos;
use crate::rng::{SeedTree, SimRng};
use crate::space::{Action, ActionSpace, State, StateSpace};
use crate::{Error, Result};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
const POWER: f64 = 0.0015;
const GRAVITY: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MountainCarConfig {
    /// Standard deviation of the Gaussian noise added to each state component.
    pub noise_std: f64,
    pub horizon: usize,
    /// Add the noise to the simulated state itself instead of only to what
    /// the agent observes.
    pub perturb_true_state: bool,
}

impl Default for MountainCarConfig {
    fn default() -> Self {
        Self {
            noise_std: 0.0,
            horizon: 200,
            perturb_true_state: false,
        }
    }
}

/// Continuous Mountain Car with thrust in `[-1, 1]` and no external reward.
#[derive(Debug, Clone)]
pub struct MountainCarEnv {
    config: MountainCarConfig,
    position: f64,
    velocity: f64,
    steps: usize,
    total: u64,
    reset_rng: SimRng,
    noise_rng: SimRng,
    noise: Normal<f64>,
}

impl MountainCarEnv {
    pub fn new(config: MountainCarConfig, seed: u64) -> Result<Self> {
        if !(config.noise_std >= 0.0 && config.noise_std.is_finite()) {
            return Err(Error::validation(format!("noise std {} must be finite and non-negative", config.noise_std)));
        }
        if config.horizon == 0 {
            return Err(Error::validation("horizon must be positive"));
        }
        let seeds = SeedTree::new(seed);
        Ok(Self {
            config,
            position: -0.5,
            velocity: 0.0,
            steps: 0,
            total: 0,
            reset_rng: seeds.rng("reset"),
            noise_rng: seeds.rng("noise"),
            noise: Normal::new(0.0, config.noise_std).expect("checked std"),
        })
    }

    pub fn config(&self) -> MountainCarConfig {
        self.config
    }

    /// The simulated `(position, velocity)` without observation noise.
    pub fn true_state(&self) -> [f64; 2] {
        [self.position, self.velocity]
    }

    /// Deterministic dynamics: returns the clamped `(position, velocity)`.
    pub fn dynamics(position: f64, velocity: f64, thrust: f64) -> (f64, f64) {
        let thrust = thrust.clamp(-1.0, 1.0);
        let mut v = velocity + POWER * thrust - GRAVITY * cos(3.0 * position);
        v = v.clamp(-MAX_SPEED, MAX_SPEED);
        let mut p = position + v;
        if p <= MIN_POSITION {
            p = MIN_POSITION;
            v = v.max(0.0);
        } else if p >= MAX_POSITION {
            p = MAX_POSITION;
            v = v.min(0.0);
        }
        (p, v)
    }

    fn clamp_state(&mut self) {
        self.position = self.position.clamp(MIN_POSITION, MAX_POSITION);
        self.velocity = self.velocity.clamp(-MAX_SPEED, MAX_SPEED);
    }

    fn observe(&mut self) -> State {
        let mut obs = vec![self.position, self.velocity];
        if !self.config.perturb_true_state && self.config.noise_std > 0.0 {
            for x in &mut obs {
                *x += self.noise.sample(&mut self.noise_rng);
            }
        }
        State::Continuous(obs)
    }
}

impl Environment for MountainCarEnv {
    fn state_space(&self) -> StateSpace {
        StateSpace::Continuous { dim: 2 }
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous {
            low: vec![-1.0],
            high: vec![1.0],
        }
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self) -> State {
        self.position = self.reset_rng.random_range(-0.6..-0.4);
        self.velocity = 0.0;
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<Step> {
        if self.steps >= self.config.horizon {
            return Err(Error::state("episode is over; call reset"));
        }
        let a: &[f64] = action.values()?;
        if a.len() != 1 || !a[0].is_finite() {
            return Err(Error::validation(format!("mountain car takes one finite thrust, got {a:?}")));
        }
        let (p, v) = Self::dynamics(self.position, self.velocity, a[0]);
        self.position = p;
        self.velocity = v;
        if self.config.perturb_true_state && self.config.noise_std > 0.0 {
            self.position += self.noise.sample(&mut self.noise_rng);
            self.velocity += self.noise.sample(&mut self.noise_rng);
            self.clamp_state();
        }
        self.steps += 1;
        self.total += 1;
        Ok(Step {
            state: self.observe(),
            reward: 0.0,
            done: self.steps >= self.config.horizon,
        })
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn total_steps(&self) -> u64 {
        self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn thrust(x: f64) -> Action {
        Action::Continuous(vec![x])
    }

    #[test]
    fn reset_has_zero_velocity() {
        let mut env = MountainCarEnv::new(MountainCarConfig { noise_std: 0.0, ..Default::default() }, 4).unwrap();
        for _ in 0..50 {
            let s = env.reset();
            let v = s.values().unwrap();
            assert_eq!(v[1], 0.0);
            assert!((-0.6..=-0.4).contains(&v[0]));
        }
    }

    #[test]
    fn observation_is_true_state_plus_noise() {
        let mut env = MountainCarEnv::new(MountainCarConfig { noise_std: 0.02, ..Default::default() }, 9).unwrap();
        env.reset();
        let mut shadow = SeedTree::new(9).rng("noise");
        let noise = Normal::new(0.0, 0.02).unwrap();
        noise.sample(&mut shadow);
        noise.sample(&mut shadow);
        for i in 0..100 {
            let obs = env.step(&thrust(if i % 20 < 10 { 1.0 } else { -1.0 })).unwrap().state;
            let truth = env.true_state();
            let obs = obs.values().unwrap();
            assert_eq!(obs[0], truth[0] + noise.sample(&mut shadow));
            assert_eq!(obs[1], truth[1] + noise.sample(&mut shadow));
        }
    }

    #[test]
    fn left_wall_stops_the_car() {
        let (p, v) = MountainCarEnv::dynamics(-1.19, -0.05, -1.0);
        assert_eq!(p, MIN_POSITION);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn episode_ends_at_horizon() {
        let mut env = MountainCarEnv::new(MountainCarConfig { horizon: 3, ..Default::default() }, 0).unwrap();
        env.reset();
        assert!(!env.step(&thrust(0.0)).unwrap().done);
        assert!(!env.step(&thrust(0.0)).unwrap().done);
        assert!(env.step(&thrust(0.0)).unwrap().done);
        assert!(matches!(env.step(&thrust(0.0)), Err(Error::State(_))));
    }

    #[test]
    fn rejects_bad_actions() {
        let mut env = MountainCarEnv::new(MountainCarConfig::default(), 0).unwrap();
        env.reset();
        assert!(env.step(&thrust(f64::NAN)).is_err());
        assert!(env.step(&Action::Continuous(vec![0.0, 1.0])).is_err());
    }

    proptest! {
        #[test]
        fn dynamics_stay_in_bounds(p in MIN_POSITION..=MAX_POSITION, v in -MAX_SPEED..=MAX_SPEED, a in -3.0f64..3.0) {
            let (p2, v2) = MountainCarEnv::dynamics(p, v, a);
            prop_assert!((MIN_POSITION..=MAX_POSITION).contains(&p2));
            prop_assert!((-MAX_SPEED..=MAX_SPEED).contains(&v2));
        }

        #[test]
        fn perturbed_state_stays_in_bounds(seed in 0u64..50, actions in proptest::collection::vec(-1.0f64..1.0, 1..100)) {
            let cfg = MountainCarConfig { noise_std: 0.05, horizon: 200, perturb_true_state: true };
            let mut env = MountainCarEnv::new(cfg, seed).unwrap();
            env.reset();
            for a in actions {
                let s = env.step(&thrust(a)).unwrap().state;
                let t = env.true_state();
                prop_assert_eq!(s.values().unwrap(), &t[..]);
                prop_assert!((MIN_POSITION..=MAX_POSITION).contains(&t[0]));
                prop_assert!((-MAX_SPEED..=MAX_SPEED).contains(&t[1]));
            }
        }
    }
}
