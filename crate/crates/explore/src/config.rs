//! Run configuration. Files are TOML; every key is optional and missing keys
//! take the defaults of the environment's preset, so the full resolved
//! configuration can always be echoed back.

use max_core::baselines::{BootConfig, EbConfig};
use max_core::envs::{ChainConfig, ChainEnv, MountainCarConfig, MountainCarEnv};
use max_core::models::{EnsembleConfig, MemberKind};
use max_core::netcore::Activation;
use max_core::planners::ShootingConfig;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EnvSpec {
    Chain(ChainConfig),
    MountainCar(MountainCarConfig),
}

impl EnvSpec {
    pub fn is_discrete(&self) -> bool {
        matches!(self, EnvSpec::Chain(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    /// Plans in the exploration MDP with the divergence utility.
    Max,
    /// Plans with the variance of imagined trajectories.
    Tvax,
    /// Greedy one-step Jensen-Rényi disagreement, no planning.
    #[serde(alias = "reactive-jdrx")]
    Jdrx,
    /// Greedy one-step prediction error of nearby past transitions.
    #[serde(alias = "reactive-perx")]
    Perx,
    Eb,
    Boot,
    Random,
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Max => "max",
            AgentKind::Tvax => "tvax",
            AgentKind::Jdrx => "jdrx",
            AgentKind::Perx => "perx",
            AgentKind::Eb => "eb",
            AgentKind::Boot => "boot",
            AgentKind::Random => "random",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| HarnessError::Config(format!("unknown agent {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctsSettings {
    pub iterations: usize,
    pub trajectories: usize,
    /// Upper bound on the search depth. The search always stops at the end
    /// of the episode; without a cap it looks that far.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Random-action episodes before the first model fit (discrete).
    pub warmup_episodes: usize,
    /// Random-action steps before the first model fit (continuous).
    pub warmup_steps: usize,
    /// Epochs of the first fit after warm-up.
    pub initial_epochs: usize,
    /// Environment steps between refits.
    pub train_every: usize,
    /// Epochs of every later refit.
    pub epochs: usize,
    pub batch_size: usize,
    /// Refit from freshly initialized parameters.
    pub from_scratch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvSpec,
    pub agent: AgentKind,
    /// Episodes including warm-up (discrete runs).
    pub episodes: usize,
    /// Environment steps including warm-up (continuous runs).
    pub steps: usize,
    /// End a discrete run once every transition has been seen.
    pub stop_when_explored: bool,
    pub ensemble: EnsembleConfig,
    pub mcts: MctsSettings,
    pub shooting: ShootingConfig,
    /// Variance tempering for the Jensen-Rényi utility.
    pub lambda: f64,
    /// Random actions scored by the reactive agents at every step.
    pub reactive_candidates: usize,
    pub schedule: Schedule,
    pub eb: EbConfig,
    pub boot: BootConfig,
}

impl RunConfig {
    pub fn chain(length: usize, trap: bool) -> Self {
        Self {
            seed: 0,
            env: EnvSpec::Chain(ChainConfig { length, trap }),
            agent: AgentKind::Max,
            episodes: 60,
            steps: 0,
            stop_when_explored: false,
            ensemble: EnsembleConfig::discrete_default(),
            mcts: MctsSettings {
                iterations: 25,
                trajectories: 5,
                horizon_cap: None,
            },
            shooting: ShootingConfig::default(),
            lambda: 0.1,
            reactive_candidates: 32,
            schedule: Schedule {
                warmup_episodes: 3,
                warmup_steps: 0,
                initial_epochs: 150,
                train_every: 1,
                epochs: 32,
                batch_size: 256,
                from_scratch: false,
            },
            eb: EbConfig::default(),
            boot: BootConfig::default(),
        }
    }

    pub fn mountain_car() -> Self {
        Self {
            seed: 0,
            env: EnvSpec::MountainCar(MountainCarConfig::default()),
            agent: AgentKind::Max,
            episodes: 0,
            steps: 800,
            stop_when_explored: false,
            ensemble: EnsembleConfig {
                size: 5,
                member: MemberKind::Network {
                    hidden: vec![64, 64],
                    activation: Activation::Swish,
                },
                ..EnsembleConfig::continuous_default()
            },
            mcts: MctsSettings {
                iterations: 25,
                trajectories: 5,
                horizon_cap: Some(15),
            },
            shooting: ShootingConfig::default(),
            lambda: 0.1,
            reactive_candidates: 32,
            schedule: Schedule {
                warmup_episodes: 0,
                warmup_steps: 256,
                initial_epochs: 50,
                train_every: 25,
                epochs: 50,
                batch_size: 256,
                from_scratch: true,
            },
            eb: EbConfig::default(),
            boot: BootConfig::default(),
        }
    }

    /// Default configuration for an environment kind (`"chain"` or
    /// `"mountain-car"`).
    pub fn preset(kind: &str) -> Result<Self, HarnessError> {
        match kind {
            "chain" => Ok(Self::chain(50, false)),
            "mountain-car" => Ok(Self::mountain_car()),
            other => Err(HarnessError::Config(format!("unknown environment kind {other:?}"))),
        }
    }

    /// Parses a TOML document on top of the preset named by `env.kind`
    /// (chain when absent).
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let user: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let kind = user
            .get("env")
            .and_then(|e| e.get("kind"))
            .and_then(|k| k.as_str())
            .unwrap_or("chain");
        Self::preset(kind)?.overlay(user)
    }

    /// Applies the keys of `user` over this configuration.
    pub fn overlay(&self, user: toml::Table) -> Result<Self, HarnessError> {
        let mut base = toml::Table::try_from(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        merge(&mut base, user);
        toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        match (&self.env, self.agent) {
            (EnvSpec::Chain(_), AgentKind::Tvax | AgentKind::Jdrx | AgentKind::Perx) => {
                return bad("tvax, jdrx and perx need a continuous environment");
            }
            (EnvSpec::MountainCar(_), AgentKind::Eb | AgentKind::Boot) => {
                return bad("eb and boot need a discrete environment");
            }
            _ => {}
        }
        let env = match self.env {
            EnvSpec::Chain(c) => ChainEnv::new(c, 0).map(drop),
            EnvSpec::MountainCar(m) => MountainCarEnv::new(m, 0).map(drop),
        };
        env.map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.env.is_discrete() && self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if !self.env.is_discrete() && self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.schedule.train_every == 0 || self.schedule.batch_size == 0 {
            return bad("train_every and batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.reactive_candidates == 0 {
            return bad("reactive_candidates must be positive");
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => {
                let same_kind = match (b.get("kind"), u.get("kind")) {
                    (Some(x), Some(y)) => x == y,
                    _ => true,
                };
                if same_kind {
                    merge(b, u);
                } else {
                    *b = u;
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
