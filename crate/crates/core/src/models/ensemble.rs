use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::history::{History, NormStats, Transition};
use super::tabular::TabularModel;
use crate::divergence::{CategoricalDist, GaussianDiag};
use crate::math::sqrt;
use crate::netcore::{
    train_step, Activation, Batch, HeadKind, LogVarBounds, Loss, Mlp, MlpSpec, Optimizer,
    OptimizerConfig, Prediction,
};
use crate::rng::{SeedTree, SimRng};
use crate::space::{Action, ActionSpace, State, StateSpace};
use crate::{Error, Result};

/// What the members predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    /// Categorical distribution over next states (discrete state spaces).
    Categorical,
    /// Diagonal Gaussian over the normalized state delta (continuous spaces).
    GaussianDelta,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum MemberKind {
    Network {
        hidden: Vec<usize>,
        activation: Activation,
    },
    /// Count table with additive smoothing; discrete spaces only.
    Tabular { smoothing: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleConfig {
    pub size: usize,
    pub member: MemberKind,
    pub optimizer: OptimizerConfig,
    pub log_var_bounds: LogVarBounds,
}

impl EnsembleConfig {
    /// Three MLPs on one-hot inputs, as used for the Chain.
    pub fn discrete_default() -> Self {
        Self {
            size: 3,
            member: MemberKind::Network {
                hidden: vec![32, 32],
                activation: Activation::Tanh,
            },
            optimizer: OptimizerConfig {
                weight_decay: 1e-6,
                ..OptimizerConfig::adam(3e-3)
            },
            log_var_bounds: LogVarBounds::default(),
        }
    }

    pub fn continuous_default() -> Self {
        Self {
            size: 32,
            member: MemberKind::Network {
                hidden: vec![512, 512, 512, 512],
                activation: Activation::Swish,
            },
            optimizer: OptimizerConfig::adam(1e-3),
            log_var_bounds: LogVarBounds::default(),
        }
    }
}

/// How one call to [`ModelEnsemble::train`] fits the members.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Passes over the data. For categorical networks the data is the set of
    /// distinct `(s, a)` pairs weighted by how often each was seen.
    pub epochs: usize,
    pub batch_size: usize,
    /// Re-initialize parameters (and optimizer state) before training.
    pub reinit: bool,
    /// Train each member on a bootstrap resample instead of the full data.
    pub bootstrap: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 256,
            reinit: false,
            bootstrap: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub net: Mlp,
    pub opt: Optimizer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Member {
    Tabular(TabularModel),
    Network(NetworkModel),
}

/// One member's next-state distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictive {
    Categorical(CategoricalDist),
    Gaussian(GaussianDiag),
}

/// `N` dynamics models trained on the same history from different random
/// initializations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnsemble {
    mode: EnsembleMode,
    state_space: StateSpace,
    action_space: ActionSpace,
    members: Vec<Member>,
    log_var_bounds: LogVarBounds,
    stats: Option<NormStats>,
    ready: bool,
    seeds: SeedTree,
    rounds: u64,
}

impl ModelEnsemble {
    pub fn new(
        state_space: StateSpace,
        action_space: ActionSpace,
        config: &EnsembleConfig,
        seeds: SeedTree,
    ) -> Result<Self> {
        if config.size == 0 {
            return Err(Error::validation("ensemble needs at least one member"));
        }
        let mode = mode_for(&state_space, &action_space)?;
        let mut members = Vec::with_capacity(config.size);
        for i in 0..config.size {
            let member = match &config.member {
                MemberKind::Tabular { smoothing } => {
                    let (StateSpace::Discrete { n }, ActionSpace::Discrete { n: na }) =
                        (&state_space, &action_space)
                    else {
                        return Err(Error::validation("tabular members need discrete spaces"));
                    };
                    Member::Tabular(TabularModel::new(*n, *na, *smoothing)?)
                }
                MemberKind::Network { hidden, activation } => {
                    let spec = network_spec(mode, &state_space, &action_space, hidden, *activation, config.log_var_bounds);
                    let net = Mlp::new(spec, &mut seeds.indexed_rng("member-init", i as u64))?;
                    let opt = Optimizer::new(config.optimizer, net.num_params())?;
                    Member::Network(NetworkModel { net, opt })
                }
            };
            members.push(member);
        }
        Ok(Self {
            mode,
            state_space,
            action_space,
            members,
            log_var_bounds: config.log_var_bounds,
            stats: None,
            ready: false,
            seeds,
            rounds: 0,
        })
    }

    /// Builds an ensemble from explicit members, for oracles and tests.
    pub fn from_members(
        state_space: StateSpace,
        action_space: ActionSpace,
        members: Vec<Member>,
        log_var_bounds: LogVarBounds,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::validation("ensemble needs at least one member"));
        }
        let mode = mode_for(&state_space, &action_space)?;
        Ok(Self {
            mode,
            state_space,
            action_space,
            members,
            log_var_bounds,
            stats: None,
            ready: false,
            seeds: SeedTree::new(0),
            rounds: 0,
        })
    }

    /// Marks the ensemble usable without training. Gaussian mode needs the
    /// normalization statistics its members were fitted under.
    pub fn assume_trained(&mut self, stats: Option<NormStats>) -> Result<()> {
        if self.mode == EnsembleMode::GaussianDelta && stats.is_none() {
            return Err(Error::validation("Gaussian ensembles need normalization statistics"));
        }
        self.stats = stats;
        self.ready = true;
        Ok(())
    }

    pub fn mode(&self) -> EnsembleMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Member] {
        &mut self.members
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.state_space
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    pub fn stats(&self) -> Option<&NormStats> {
        self.stats.as_ref()
    }

    pub fn log_var_bounds(&self) -> LogVarBounds {
        self.log_var_bounds
    }

    pub fn is_trained(&self) -> bool {
        self.ready
    }

    /// Number of completed training calls.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    fn check_ready(&self) -> Result<()> {
        if !self.ready {
            return Err(Error::state("ensemble has not been trained"));
        }
        Ok(())
    }

    fn check_inputs(&self, s: &State, a: &Action) -> Result<()> {
        if !self.state_space.contains(s) {
            return Err(Error::validation(format!("state {s:?} is not in the state space")));
        }
        if !self.action_space.contains(a) {
            return Err(Error::validation(format!("action {a:?} is not in the action space")));
        }
        Ok(())
    }

    fn encode(&self, s: &State, a: &Action) -> Result<Vec<f64>> {
        match (s, a) {
            (State::Discrete(si), Action::Discrete(ai)) => {
                let ns = self.state_space.encoded_len();
                let mut x = vec![0.0; ns + self.action_space.encoded_len()];
                x[*si] = 1.0;
                x[ns + ai] = 1.0;
                Ok(x)
            }
            (State::Continuous(sv), Action::Continuous(av)) => {
                let stats = self
                    .stats
                    .as_ref()
                    .ok_or_else(|| Error::state("missing normalization statistics"))?;
                let mut x = Vec::with_capacity(sv.len() + av.len());
                stats.state.normalize(sv, &mut x);
                stats.action.normalize(av, &mut x);
                Ok(x)
            }
            _ => Err(Error::validation("state and action kinds do not match the ensemble")),
        }
    }

    fn member_prediction(&self, i: usize, input: &[f64], s: &State, a: &Action) -> Result<Predictive> {
        match &self.members[i] {
            Member::Tabular(t) => t.predict(s.index()?, a.index()?).map(Predictive::Categorical),
            Member::Network(m) => match m.net.forward(input)? {
                Prediction::Categorical(c) => Ok(Predictive::Categorical(c)),
                Prediction::Gaussian(g) => Ok(Predictive::Gaussian(g)),
                Prediction::Linear(_) => Err(Error::state("member has a linear head")),
            },
        }
    }

    /// Each member's prediction in the space it was trained in: categorical
    /// over states, or Gaussian over the normalized delta.
    pub fn predict_all_raw(&self, s: &State, a: &Action) -> Result<Vec<Predictive>> {
        self.check_ready()?;
        self.check_inputs(s, a)?;
        let input = self.encode(s, a)?;
        (0..self.members.len())
            .map(|i| self.member_prediction(i, &input, s, a).map_err(|e| e.in_member(i)))
            .collect()
    }

    /// Normalized-delta Gaussians (Gaussian mode).
    pub fn predict_all_normalized(&self, s: &State, a: &Action) -> Result<Vec<GaussianDiag>> {
        self.predict_all_raw(s, a)?
            .into_iter()
            .map(|p| match p {
                Predictive::Gaussian(g) => Ok(g),
                Predictive::Categorical(_) => {
                    Err(Error::validation("normalized predictions need a Gaussian ensemble"))
                }
            })
            .collect()
    }

    /// Every member's next-state distribution in state units.
    pub fn predict_all(&self, s: &State, a: &Action) -> Result<Vec<Predictive>> {
        let raw = self.predict_all_raw(s, a)?;
        match self.mode {
            EnsembleMode::Categorical => Ok(raw),
            EnsembleMode::GaussianDelta => {
                let sv = s.values()?;
                raw.into_iter()
                    .map(|p| match p {
                        Predictive::Gaussian(g) => self.to_state_units(sv, &g).map(Predictive::Gaussian),
                        other => Ok(other),
                    })
                    .collect()
            }
        }
    }

    /// Maps a normalized-delta Gaussian to a next-state Gaussian around `s`.
    pub fn to_state_units(&self, s: &[f64], g: &GaussianDiag) -> Result<GaussianDiag> {
        let stats = self
            .stats
            .as_ref()
            .ok_or_else(|| Error::state("missing normalization statistics"))?;
        let mut mean = Vec::with_capacity(s.len());
        stats.delta.denormalize(g.mean(), &mut mean);
        mean.iter_mut().zip(s).for_each(|(m, &x)| *m += x);
        let var = g
            .var()
            .iter()
            .zip(&stats.delta.std)
            .map(|(&v, &sd)| v * sd * sd)
            .collect();
        GaussianDiag::new(mean, var)
    }

    /// Samples `s'` from member `member`.
    pub fn sample_next(&self, s: &State, a: &Action, member: usize, rng: &mut SimRng) -> Result<State> {
        if member >= self.members.len() {
            return Err(Error::validation(format!(
                "member {member} out of range for an ensemble of {}",
                self.members.len()
            )));
        }
        self.check_ready()?;
        self.check_inputs(s, a)?;
        let input = self.encode(s, a)?;
        let p = self
            .member_prediction(member, &input, s, a)
            .map_err(|e| e.in_member(member))?;
        self.sample_from(s, &p, rng)
    }

    /// Draws a next state from a member prediction as returned by
    /// [`predict_all_raw`](Self::predict_all_raw).
    pub fn sample_from(&self, s: &State, p: &Predictive, rng: &mut SimRng) -> Result<State> {
        match p {
            Predictive::Categorical(c) => Ok(State::Discrete(c.sample_with(rng.random::<f64>()))),
            Predictive::Gaussian(g) => {
                let stats = self
                    .stats
                    .as_ref()
                    .ok_or_else(|| Error::state("missing normalization statistics"))?;
                let z: Vec<f64> = g
                    .mean()
                    .iter()
                    .zip(g.var())
                    .map(|(&m, &v)| {
                        let e: f64 = StandardNormal.sample(rng);
                        m + sqrt(v) * e
                    })
                    .collect();
                let mut next = Vec::with_capacity(z.len());
                stats.delta.denormalize(&z, &mut next);
                next.iter_mut().zip(s.values()?).for_each(|(n, &x)| *n += x);
                Ok(State::Continuous(next))
            }
        }
    }

    /// Fits every member to `history`. Normalization statistics are
    /// recomputed first and stay fixed for the whole call.
    pub fn train(&mut self, history: &History, cfg: &TrainConfig) -> Result<()> {
        if history.is_empty() {
            return Err(Error::validation("cannot train on an empty history"));
        }
        if cfg.batch_size == 0 {
            return Err(Error::validation("batch size must be positive"));
        }
        for t in history.transitions() {
            if !self.state_space.contains(&t.s)
                || !self.state_space.contains(&t.s_next)
                || !self.action_space.contains(&t.a)
            {
                return Err(Error::validation(format!("transition {t:?} is outside the spaces")));
            }
        }
        if self.mode == EnsembleMode::GaussianDelta {
            self.stats = Some(history.normalization()?);
        }
        let round = self.rounds;
        for i in 0..self.members.len() {
            self.train_member(i, history, cfg, round)
                .map_err(|e| e.in_member(i))?;
        }
        self.rounds += 1;
        self.ready = true;
        Ok(())
    }

    fn train_member(&mut self, i: usize, history: &History, cfg: &TrainConfig, round: u64) -> Result<()> {
        let tag = (round << 16) | i as u64;
        let mut rng = self.seeds.indexed_rng("member-train", tag);
        let resampled;
        let data: &[Transition] = if cfg.bootstrap {
            let all = history.transitions();
            resampled = (0..all.len())
                .map(|_| all[rng.random_range(0..all.len())].clone())
                .collect::<Vec<_>>();
            &resampled
        } else {
            history.transitions()
        };

        if let Member::Tabular(t) = &mut self.members[i] {
            t.clear_counts();
            for tr in data {
                t.observe(tr.s.index()?, tr.a.index()?, tr.s_next.index()?)?;
            }
            return Ok(());
        }

        if cfg.reinit {
            let mut init = self.seeds.indexed_rng("member-reinit", tag);
            if let Member::Network(m) = &mut self.members[i] {
                m.net.reinitialize(&mut init);
                m.opt.reset();
            }
        }
        match self.mode {
            EnsembleMode::Categorical => {
                let batches = self.categorical_batches(data, cfg.batch_size)?;
                let Member::Network(m) = &mut self.members[i] else { unreachable!() };
                for _ in 0..cfg.epochs {
                    for b in &batches {
                        train_step(&mut m.net, &mut m.opt, b, Loss::CrossEntropy)?;
                    }
                }
            }
            EnsembleMode::GaussianDelta => {
                let (inputs, targets) = self.gaussian_rows(data)?;
                let in_dim = self.state_space.encoded_len() + self.action_space.encoded_len();
                let out_dim = self.state_space.encoded_len();
                let mut order: Vec<usize> = (0..data.len()).collect();
                let Member::Network(m) = &mut self.members[i] else { unreachable!() };
                for _ in 0..cfg.epochs {
                    order.shuffle(&mut rng);
                    for chunk in order.chunks(cfg.batch_size) {
                        let mut b = Batch::new(in_dim, out_dim);
                        for &k in chunk {
                            b.push(&inputs[k * in_dim..(k + 1) * in_dim], &targets[k * out_dim..(k + 1) * out_dim]);
                        }
                        train_step(&mut m.net, &mut m.opt, &b, Loss::NllGaussian)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Distinct `(s, a)` pairs with their empirical next-state distribution,
    /// weighted by visit count, split into batches in a fixed order.
    fn categorical_batches(&self, data: &[Transition], batch_size: usize) -> Result<Vec<Batch>> {
        let ns = self.state_space.encoded_len();
        let na = self.action_space.encoded_len();
        let mut counts: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for t in data {
            let row = counts
                .entry((t.s.index()?, t.a.index()?))
                .or_insert_with(|| vec![0.0; ns]);
            row[t.s_next.index()?] += 1.0;
        }
        let mut batches = Vec::new();
        let mut batch = Batch::new(ns + na, ns);
        let mut input = vec![0.0; ns + na];
        for ((s, a), row) in counts {
            let total: f64 = row.iter().sum();
            let target: Vec<f64> = row.iter().map(|c| c / total).collect();
            input.fill(0.0);
            input[s] = 1.0;
            input[ns + a] = 1.0;
            batch.push_weighted(&input, &target, total);
            if batch.len() == batch_size {
                batches.push(core::mem::replace(&mut batch, Batch::new(ns + na, ns)));
            }
        }
        if !batch.is_empty() {
            batches.push(batch);
        }
        Ok(batches)
    }

    fn gaussian_rows(&self, data: &[Transition]) -> Result<(Vec<f64>, Vec<f64>)> {
        let stats = self.stats.as_ref().expect("stats refreshed before training");
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut delta = Vec::new();
        for t in data {
            let s = t.s.values()?;
            stats.state.normalize(s, &mut inputs);
            stats.action.normalize(t.a.values()?, &mut inputs);
            delta.clear();
            delta.extend(t.s_next.values()?.iter().zip(s).map(|(y, x)| y - x));
            stats.delta.normalize(&delta, &mut targets);
        }
        Ok((inputs, targets))
    }
}

fn mode_for(state_space: &StateSpace, action_space: &ActionSpace) -> Result<EnsembleMode> {
    match (state_space, action_space) {
        (StateSpace::Discrete { n }, ActionSpace::Discrete { n: na }) if *n > 0 && *na > 0 => {
            Ok(EnsembleMode::Categorical)
        }
        (StateSpace::Continuous { dim }, ActionSpace::Continuous { low, high })
            if *dim > 0 && !low.is_empty() && low.len() == high.len() =>
        {
            Ok(EnsembleMode::GaussianDelta)
        }
        _ => Err(Error::validation(
            "ensembles need both spaces discrete or both continuous and non-empty",
        )),
    }
}

fn network_spec(
    mode: EnsembleMode,
    state_space: &StateSpace,
    action_space: &ActionSpace,
    hidden: &[usize],
    activation: Activation,
    bounds: LogVarBounds,
) -> MlpSpec {
    let ns = state_space.encoded_len();
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(ns + action_space.encoded_len());
    widths.extend_from_slice(hidden);
    let head = match mode {
        EnsembleMode::Categorical => {
            widths.push(ns);
            HeadKind::Categorical
        }
        EnsembleMode::GaussianDelta => {
            widths.push(2 * ns);
            HeadKind::GaussianDiag
        }
    };
    MlpSpec {
        widths,
        activation,
        head,
        log_var_bounds: bounds,
    }
}
