//! Reactive comparison agents for discrete environments: Q-learning driven
//! by an oracle novelty bonus, and bootstrapped Q-heads that act greedily
//! with respect to one randomly drawn head per episode.
//!
//! Neither agent uses ε-greedy; all exploration comes from the bonus or the
//! head disagreement.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::envs::Environment;
use crate::models::{History, Transition};
use crate::netcore::{
    train_step, Activation, Batch, HeadKind, Loss, Mlp, MlpSpec, Optimizer, OptimizerConfig,
    OptimizerKind,
};
use crate::rng::{SeedTree, SimRng};
use crate::space::{Action, ActionSpace, State, StateSpace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StateEncoding {
    OneHot,
    /// `x_i = 1` for every `i ≤ s`.
    Thermometer,
}

impl StateEncoding {
    pub fn encode(&self, s: usize, n_states: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(n_states, 0.0);
        match self {
            StateEncoding::OneHot => out[s] = 1.0,
            StateEncoding::Thermometer => out[..=s].fill(1.0),
        }
    }
}

/// How Q-values are represented.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum QRepresentation {
    /// Table initialized uniformly in `[0, init_high]`, updated with step
    /// size `step_size`. Each head also carries a fixed additive prior drawn
    /// uniformly from `[0, prior_scale]`.
    Tabular {
        init_high: f64,
        step_size: f64,
        prior_scale: f64,
    },
    /// One tanh MLP per head trained with the Huber loss.
    Mlp {
        hidden: Vec<usize>,
        encoding: StateEncoding,
        optimizer: OptimizerConfig,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QConfig {
    pub heads: usize,
    pub gamma: f64,
    pub batch_size: usize,
    /// Oldest transitions are dropped beyond this size; `None` keeps all.
    pub replay_capacity: Option<usize>,
    /// Training batches between target refreshes.
    pub target_sync: usize,
    pub representation: QRepresentation,
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.batch_size == 0 || self.target_sync == 0 {
            return Err(Error::validation("heads, batch size and target sync must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::validation("discount must lie in [0, 1)"));
        }
        if self.replay_capacity == Some(0) {
            return Err(Error::validation("replay capacity must be positive"));
        }
        match &self.representation {
            QRepresentation::Tabular {
                init_high,
                step_size,
                prior_scale,
            } => {
                if !(*init_high >= 0.0 && *prior_scale >= 0.0 && *step_size > 0.0 && *step_size <= 1.0) {
                    return Err(Error::validation("tabular Q settings out of range"));
                }
            }
            QRepresentation::Mlp { optimizer, .. } => optimizer.validate()?,
        }
        Ok(())
    }
}

/// The RMSprop setup shared by both MLP variants.
pub fn rmsprop(learning_rate: f64) -> OptimizerConfig {
    OptimizerConfig {
        kind: OptimizerKind::RmsProp { momentum: 0.9 },
        learning_rate,
        weight_decay: 0.0,
        grad_clip: Some(5.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EbConfig {
    pub q: QConfig,
    pub bonus: f64,
}

impl Default for EbConfig {
    fn default() -> Self {
        Self {
            q: QConfig {
                heads: 1,
                gamma: 0.975,
                batch_size: 32,
                replay_capacity: Some(256),
                target_sync: 256,
                representation: QRepresentation::Tabular {
                    init_high: 0.01,
                    step_size: 0.1,
                    prior_scale: 0.0,
                },
            },
            bonus: 0.1,
        }
    }
}

impl EbConfig {
    /// The network variant: three hidden layers of 64, one-hot states.
    pub fn mlp() -> Self {
        let mut cfg = Self::default();
        cfg.q.representation = QRepresentation::Mlp {
            hidden: vec![64, 64, 64],
            encoding: StateEncoding::OneHot,
            optimizer: rmsprop(1e-2),
        };
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootConfig {
    pub q: QConfig,
    /// Training batches per head after every episode.
    pub train_iterations: usize,
}

impl Default for BootConfig {
    fn default() -> Self {
        Self {
            q: QConfig {
                heads: 10,
                gamma: 0.95,
                batch_size: 32,
                replay_capacity: None,
                target_sync: 16,
                representation: QRepresentation::Tabular {
                    init_high: 0.01,
                    step_size: 0.1,
                    prior_scale: 0.01,
                },
            },
            train_iterations: 64,
        }
    }
}

impl BootConfig {
    /// The network variant: one hidden layer of 32, thermometer-coded states.
    pub fn mlp() -> Self {
        let mut cfg = Self::default();
        cfg.q.representation = QRepresentation::Mlp {
            hidden: vec![32],
            encoding: StateEncoding::Thermometer,
            optimizer: rmsprop(1e-4),
        };
        cfg
    }
}

/// A transition as stored for Q-learning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub s: usize,
    pub a: usize,
    pub reward: f64,
    pub s_next: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Head {
    Table { q: Vec<f64>, prior: Vec<f64> },
    Net { net: Mlp, opt: Optimizer },
}

/// Greedy Q-learning agent with `K ≥ 1` heads, a replay buffer and target
/// copies.
#[derive(Debug, Clone)]
pub struct QAgent {
    config: QConfig,
    n_states: usize,
    n_actions: usize,
    heads: Vec<Head>,
    targets: Vec<Head>,
    replay: VecDeque<Experience>,
    active: usize,
    batches: u64,
    rng: SimRng,
    scratch: Vec<f64>,
}

impl QAgent {
    pub fn new(config: QConfig, n_states: usize, n_actions: usize, seeds: SeedTree) -> Result<Self> {
        config.validate()?;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::validation("Q-learning needs non-empty discrete spaces"));
        }
        let mut heads = Vec::with_capacity(config.heads);
        for k in 0..config.heads {
            let mut init = seeds.indexed_rng("head-init", k as u64);
            let head = match &config.representation {
                QRepresentation::Tabular {
                    init_high,
                    prior_scale,
                    ..
                } => {
                    let len = n_states * n_actions;
                    let q = (0..len).map(|_| init.random::<f64>() * init_high).collect();
                    let prior = (0..len).map(|_| init.random::<f64>() * prior_scale).collect();
                    Head::Table { q, prior }
                }
                QRepresentation::Mlp {
                    hidden,
                    optimizer,
                    ..
                } => {
                    let mut widths = vec![n_states];
                    widths.extend_from_slice(hidden);
                    widths.push(n_actions);
                    let net = Mlp::new(MlpSpec::new(widths, Activation::Tanh, HeadKind::Linear), &mut init)?;
                    let opt = Optimizer::new(*optimizer, net.num_params())?;
                    Head::Net { net, opt }
                }
            };
            heads.push(head);
        }
        Ok(Self {
            targets: heads.clone(),
            heads,
            config,
            n_states,
            n_actions,
            replay: VecDeque::new(),
            active: 0,
            batches: 0,
            rng: seeds.rng("agent"),
            scratch: Vec::new(),
        })
    }

    pub fn config(&self) -> &QConfig {
        &self.config
    }

    pub fn active_head(&self) -> usize {
        self.active
    }

    pub fn replay(&self) -> impl Iterator<Item = &Experience> {
        self.replay.iter()
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    /// Training batches performed so far.
    pub fn batches_trained(&self) -> u64 {
        self.batches
    }

    /// Draws the head used for the coming episode.
    pub fn begin_episode(&mut self) -> usize {
        self.active = self.rng.random_range(0..self.heads.len());
        self.active
    }

    fn values_of(&mut self, head: usize, target: bool, s: usize) -> Result<Vec<f64>> {
        let h = if target { &self.targets[head] } else { &self.heads[head] };
        match h {
            Head::Table { q, prior } => {
                let o = s * self.n_actions;
                Ok((0..self.n_actions).map(|a| q[o + a] + prior[o + a]).collect())
            }
            Head::Net { net, .. } => {
                let QRepresentation::Mlp { encoding, .. } = &self.config.representation else {
                    unreachable!("network heads imply the MLP representation")
                };
                encoding.encode(s, self.n_states, &mut self.scratch);
                net.forward_raw(&self.scratch)
            }
        }
    }

    /// Q-values of head `head` at `s`.
    pub fn q_values(&mut self, head: usize, s: usize) -> Result<Vec<f64>> {
        if head >= self.heads.len() || s >= self.n_states {
            return Err(Error::validation(format!("head {head} or state {s} out of range")));
        }
        self.values_of(head, false, s)
    }

    /// Greedy action of the active head; ties go to the lowest index.
    pub fn act(&mut self, s: usize) -> Result<usize> {
        Ok(argmax(&self.q_values(self.active, s)?))
    }

    pub fn remember(&mut self, e: Experience) {
        if let Some(cap) = self.config.replay_capacity {
            while self.replay.len() >= cap {
                self.replay.pop_front();
            }
        }
        self.replay.push_back(e);
    }

    /// One batch, drawn uniformly with replacement, applied to every head.
    pub fn train_batch(&mut self) -> Result<()> {
        if self.replay.is_empty() {
            return Ok(());
        }
        let picks: Vec<Experience> = (0..self.config.batch_size)
            .map(|_| self.replay[self.rng.random_range(0..self.replay.len())])
            .collect();
        for k in 0..self.heads.len() {
            let mut targets = Vec::with_capacity(picks.len());
            for e in &picks {
                let next = self.values_of(k, true, e.s_next)?;
                let bootstrap = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                targets.push(e.reward + self.config.gamma * bootstrap);
            }
            self.update_head(k, &picks, &targets)?;
        }
        self.batches += 1;
        if self.batches % self.config.target_sync as u64 == 0 {
            self.targets.clone_from(&self.heads);
        }
        Ok(())
    }

    fn update_head(&mut self, k: usize, picks: &[Experience], targets: &[f64]) -> Result<()> {
        let n_actions = self.n_actions;
        match (&mut self.heads[k], &self.config.representation) {
            (Head::Table { q, prior }, QRepresentation::Tabular { step_size, .. }) => {
                for (e, &y) in picks.iter().zip(targets) {
                    let i = e.s * n_actions + e.a;
                    q[i] += step_size * (y - prior[i] - q[i]);
                }
            }
            (Head::Net { net, opt }, QRepresentation::Mlp { encoding, .. }) => {
                let mut batch = Batch::new(self.n_states, n_actions);
                let mut x = Vec::new();
                let mut target = vec![0.0; n_actions];
                let mut mask = vec![0.0; n_actions];
                for (e, &y) in picks.iter().zip(targets) {
                    encoding.encode(e.s, self.n_states, &mut x);
                    target.fill(0.0);
                    mask.fill(0.0);
                    target[e.a] = y;
                    mask[e.a] = 1.0;
                    batch.push_masked(&x, &target, &mask);
                }
                train_step(net, opt, &batch, Loss::Huber { delta: 1.0 })?;
            }
            _ => unreachable!("heads match the representation"),
        }
        Ok(())
    }

    /// Bitwise snapshot of the target parameters, for tests.
    pub fn target_fingerprint(&self) -> Vec<u64> {
        self.targets
            .iter()
            .flat_map(|h| match h {
                Head::Table { q, .. } => q.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                Head::Net { net, .. } => net.params().iter().map(|v| v.to_bits()).collect(),
            })
            .collect()
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Pays `bonus` the first time each `(s, a, s')` triple is seen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BonusOracle {
    visited: BTreeSet<(usize, usize, usize)>,
    bonus: f64,
}

impl BonusOracle {
    pub fn new(bonus: f64) -> Self {
        Self {
            visited: BTreeSet::new(),
            bonus,
        }
    }

    pub fn reward(&mut self, s: usize, a: usize, s_next: usize) -> f64 {
        if self.visited.insert((s, a, s_next)) {
            self.bonus
        } else {
            0.0
        }
    }

    pub fn visited(&self) -> usize {
        self.visited.len()
    }
}

fn discrete_spaces<E: Environment + ?Sized>(env: &E) -> Result<(usize, usize)> {
    match (env.state_space(), env.action_space()) {
        (StateSpace::Discrete { n }, ActionSpace::Discrete { n: na }) => Ok((n, na)),
        _ => Err(Error::validation("baselines need a discrete environment")),
    }
}

/// Exploration-bonus agent: greedy Q-learning on `reward + bonus`, trained
/// with one batch after every step.
#[derive(Debug, Clone)]
pub struct EbAgent {
    pub q: QAgent,
    pub oracle: BonusOracle,
}

impl EbAgent {
    pub fn new<E: Environment + ?Sized>(cfg: &EbConfig, env: &E, seeds: SeedTree) -> Result<Self> {
        let (n, na) = discrete_spaces(env)?;
        Ok(Self {
            q: QAgent::new(cfg.q.clone(), n, na, seeds)?,
            oracle: BonusOracle::new(cfg.bonus),
        })
    }
}

/// Takes one greedy step from `s` and learns from it.
pub fn eb_step<E: Environment + ?Sized>(agent: &mut EbAgent, env: &mut E, s: &State) -> Result<(Transition, bool)> {
    let si = s.index()?;
    let a = agent.q.act(si)?;
    let step = env.step(&Action::Discrete(a))?;
    let sn = step.state.index()?;
    let reward = step.reward + agent.oracle.reward(si, a, sn);
    agent.q.remember(Experience {
        s: si,
        a,
        reward,
        s_next: sn,
    });
    agent.q.train_batch()?;
    Ok((Transition::new(s.clone(), Action::Discrete(a), step.state), step.done))
}

#[derive(Debug, Clone)]
pub struct BootAgent {
    pub q: QAgent,
    pub train_iterations: usize,
}

impl BootAgent {
    pub fn new<E: Environment + ?Sized>(cfg: &BootConfig, env: &E, seeds: SeedTree) -> Result<Self> {
        let (n, na) = discrete_spaces(env)?;
        Ok(Self {
            q: QAgent::new(cfg.q.clone(), n, na, seeds)?,
            train_iterations: cfg.train_iterations,
        })
    }
}

/// Plays one episode greedily with a freshly drawn head, then trains all
/// heads on the whole replay.
pub fn boot_episode<E: Environment + ?Sized>(agent: &mut BootAgent, env: &mut E) -> Result<History> {
    agent.q.begin_episode();
    let mut s = env.reset();
    let mut episode = History::new();
    loop {
        let si = s.index()?;
        let a = agent.q.act(si)?;
        let step = env.step(&Action::Discrete(a))?;
        agent.q.remember(Experience {
            s: si,
            a,
            reward: step.reward,
            s_next: step.state.index()?,
        });
        episode.push(Transition::new(s, Action::Discrete(a), step.state.clone()));
        s = step.state;
        if step.done {
            break;
        }
    }
    for _ in 0..agent.train_iterations {
        agent.q.train_batch()?;
    }
    Ok(episode)
}
