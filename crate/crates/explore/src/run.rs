//! The exploration loop: warm up with random actions, fit the ensemble, then
//! repeatedly plan in the exploration MDP, take one real step, record it and
//! refit on schedule.

use max_core::baselines::{boot_episode, eb_step, BootAgent, EbAgent};
use max_core::divergence::VarianceTempering;
use max_core::envs::{
    explored_fraction, ChainConfig, ChainEnv, Environment, MountainCarConfig, MountainCarEnv, MAX_POSITION,
    MAX_SPEED, MIN_POSITION,
};
use max_core::exploration::{prediction_error, ExplorationMdp, UtilityKind};
use max_core::models::{History, ModelEnsemble, TrainConfig, Transition};
use max_core::planners::{mcts_search, MctsConfig, ShootingPlanner};
use max_core::rng::{SeedTree, SimRng};
use max_core::{Action, State};
use rand::Rng;

use crate::config::{AgentKind, EnvSpec, RunConfig};
use crate::coverage::{coverage_map, CoverageMap};
use crate::metrics::{EpisodeRow, MetricsSink, RunRecord, RunSummary};
use crate::HarnessError;

pub const COVERAGE_BINS: usize = 20;
pub const MOUNTAIN_CAR_BOUNDS: [(f64, f64); 2] = [(MIN_POSITION, MAX_POSITION), (-MAX_SPEED, MAX_SPEED)];

/// Runs one seeded experiment, handing every episode row to `sink` as soon
/// as it is complete.
pub fn run_exploration(cfg: &RunConfig, sink: &mut dyn MetricsSink) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    match cfg.env {
        EnvSpec::Chain(chain) => run_chain(cfg, chain, sink),
        EnvSpec::MountainCar(mc) => run_mountain_car(cfg, mc, sink),
    }
}

fn train_config(cfg: &RunConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: cfg.schedule.batch_size,
        reinit: cfg.schedule.from_scratch,
        bootstrap: false,
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn run_chain(cfg: &RunConfig, chain: ChainConfig, sink: &mut dyn MetricsSink) -> Result<RunRecord, HarnessError> {
    let seeds = SeedTree::new(cfg.seed);
    let mut env = ChainEnv::new(chain, seeds.seed("env"))?;
    let table = env.transition_table();
    let mut history = History::new();
    let mut rows = Vec::new();
    let mut policy_rng = seeds.rng("random-policy");
    let mut episodes_to_full = None;

    let mut ensemble = match cfg.agent {
        AgentKind::Max => Some(ModelEnsemble::new(
            env.state_space(),
            env.action_space(),
            &cfg.ensemble,
            seeds.child("ensemble"),
        )?),
        _ => None,
    };
    let mut eb = match cfg.agent {
        AgentKind::Eb => Some(EbAgent::new(&cfg.eb, &env, seeds.child("eb"))?),
        _ => None,
    };
    let mut boot = match cfg.agent {
        AgentKind::Boot => Some(BootAgent::new(&cfg.boot, &env, seeds.child("boot"))?),
        _ => None,
    };
    let mut steps_since_fit = 0;

    for episode in 1..=cfg.episodes {
        let warmup = episode <= cfg.schedule.warmup_episodes;
        let mut utilities = Vec::new();
        match cfg.agent {
            AgentKind::Boot if !warmup => {
                let agent = boot.as_mut().expect("boot agent");
                for t in boot_episode(agent, &mut env)?.transitions() {
                    history.push(t.clone());
                }
            }
            AgentKind::Eb if !warmup => {
                let agent = eb.as_mut().expect("eb agent");
                let mut s = env.reset();
                loop {
                    let (t, done) = eb_step(agent, &mut env, &s)?;
                    s = t.s_next.clone();
                    history.push(t);
                    if done {
                        break;
                    }
                }
            }
            _ => {
                let mut s = env.reset();
                loop {
                    let action = match (&ensemble, warmup) {
                        (Some(ens), false) => {
                            let horizon = env.remaining_steps().min(cfg.mcts.horizon_cap.unwrap_or(usize::MAX));
                            let mdp = ExplorationMdp::new(ens, UtilityKind::Jsd, s.clone(), horizon)?;
                            let mcts = MctsConfig {
                                iterations: cfg.mcts.iterations,
                                trajectories: cfg.mcts.trajectories,
                                horizon,
                                seed: seeds.indexed_seed("mcts", env.total_steps()),
                            };
                            let result = mcts_search(&mdp, &mcts)?;
                            utilities.push(result.child_values[result.action]);
                            Action::Discrete(result.action)
                        }
                        _ => Action::Discrete(policy_rng.random_range(0..2)),
                    };
                    let step = env.step(&action)?;
                    let t = Transition::new(s, action, step.state.clone());
                    // Warm-up experience seeds the Q-learners' replay too.
                    if let Some(agent) = eb.as_mut() {
                        remember(&mut agent.q, &t, step.reward)?;
                    }
                    if let Some(agent) = boot.as_mut() {
                        remember(&mut agent.q, &t, step.reward)?;
                    }
                    history.push(t);
                    s = step.state;
                    if let (Some(ens), false) = (ensemble.as_mut(), warmup) {
                        steps_since_fit += 1;
                        if steps_since_fit >= cfg.schedule.train_every {
                            ens.train(&history, &train_config(cfg, cfg.schedule.epochs))?;
                            steps_since_fit = 0;
                        }
                    }
                    if step.done {
                        break;
                    }
                }
            }
        }
        if episode == cfg.schedule.warmup_episodes {
            if let Some(ens) = ensemble.as_mut() {
                ens.train(&history, &train_config(cfg, cfg.schedule.initial_epochs))?;
            }
        }
        if cfg.schedule.warmup_episodes == 0 && episode == 1 {
            // Nothing to fit on before the first episode; fit right after it.
            if let Some(ens) = ensemble.as_mut() {
                if !ens.is_trained() {
                    ens.train(&history, &train_config(cfg, cfg.schedule.initial_epochs))?;
                }
            }
        }
        let fraction = explored_fraction(&table, &history);
        let row = EpisodeRow {
            episode,
            env_steps: env.total_steps(),
            explored_fraction: fraction,
            mean_plan_utility: mean(&utilities),
            max_position: None,
        };
        sink.record(&row)?;
        rows.push(row);
        if fraction >= 1.0 && episodes_to_full.is_none() {
            episodes_to_full = Some(episode);
            if cfg.stop_when_explored {
                break;
            }
        }
    }
    Ok(RunRecord {
        summary: RunSummary {
            agent: cfg.agent.name().to_string(),
            seed: cfg.seed,
            episodes: rows.len(),
            total_steps: env.total_steps(),
            final_fraction: rows.last().map_or(0.0, |r| r.explored_fraction),
            episodes_to_full,
            max_position: None,
        },
        rows,
        coverage: None,
    })
}

fn remember(q: &mut max_core::baselines::QAgent, t: &Transition, reward: f64) -> Result<(), HarnessError> {
    q.remember(max_core::baselines::Experience {
        s: t.s.index()?,
        a: t.a.index()?,
        reward,
        s_next: t.s_next.index()?,
    });
    Ok(())
}

/// Scores candidate actions by the prediction error of the nearest past
/// transition, measured in normalized `(s, a)` space.
struct PastErrors {
    keys: Vec<Vec<f64>>,
    errors: Vec<f64>,
}

impl PastErrors {
    fn new(ens: &ModelEnsemble, history: &History) -> Result<Self, HarnessError> {
        let stats = ens.stats().ok_or_else(|| HarnessError::Config("ensemble has no statistics".into()))?;
        let mut keys = Vec::with_capacity(history.len());
        let mut errors = Vec::with_capacity(history.len());
        for t in history.transitions() {
            keys.push(Self::key(stats, &t.s, &t.a)?);
            errors.push(prediction_error(ens, t)?);
        }
        Ok(Self { keys, errors })
    }

    fn key(stats: &max_core::models::NormStats, s: &State, a: &Action) -> Result<Vec<f64>, HarnessError> {
        let mut k = Vec::new();
        stats.state.normalize(s.values()?, &mut k);
        stats.action.normalize(a.values()?, &mut k);
        Ok(k)
    }

    fn score(&self, stats: &max_core::models::NormStats, s: &State, a: &Action) -> Result<f64, HarnessError> {
        let k = Self::key(stats, s, a)?;
        let mut best = (f64::INFINITY, 0.0);
        for (key, &e) in self.keys.iter().zip(&self.errors) {
            let d: f64 = key.iter().zip(&k).map(|(x, y)| (x - y) * (x - y)).sum();
            if d < best.0 {
                best = (d, e);
            }
        }
        Ok(best.1)
    }
}

fn random_thrust(rng: &mut SimRng) -> Action {
    Action::Continuous(vec![rng.random_range(-1.0..=1.0)])
}

fn run_mountain_car(
    cfg: &RunConfig,
    mc: MountainCarConfig,
    sink: &mut dyn MetricsSink,
) -> Result<RunRecord, HarnessError> {
    let seeds = SeedTree::new(cfg.seed);
    let mut env = MountainCarEnv::new(mc, seeds.seed("env"))?;
    let mut history = History::new();
    let mut true_history = History::new();
    let mut rows = Vec::new();
    let mut policy_rng = seeds.rng("random-policy");
    let mut plan_rng = seeds.rng("planner");
    let mut ensemble = match cfg.agent {
        AgentKind::Random => None,
        _ => Some(ModelEnsemble::new(
            env.state_space(),
            env.action_space(),
            &cfg.ensemble,
            seeds.child("ensemble"),
        )?),
    };
    let tempering = VarianceTempering::new(cfg.lambda, vec![cfg.ensemble.log_var_bounds.var_max(); 2])?;
    let utility = match cfg.agent {
        AgentKind::Tvax => UtilityKind::TrajVariance,
        AgentKind::Perx => UtilityKind::PredError,
        _ => UtilityKind::Jrd { tempering },
    };
    let mut planner = ShootingPlanner::new(cfg.shooting)?;
    let mut past_errors: Option<PastErrors> = None;
    let mut max_position = f64::NEG_INFINITY;
    let mut episode = 0;
    let mut steps_since_fit = 0;

    while (env.total_steps() as usize) < cfg.steps {
        episode += 1;
        let mut s = env.reset();
        let mut true_s = env.true_state().to_vec();
        max_position = max_position.max(true_s[0]);
        planner.reset();
        let mut utilities = Vec::new();
        loop {
            let warmup = (env.total_steps() as usize) < cfg.schedule.warmup_steps;
            let action = match (&ensemble, warmup, cfg.agent) {
                (Some(ens), false, AgentKind::Max | AgentKind::Tvax) => {
                    let mdp = ExplorationMdp::new(ens, utility.clone(), s.clone(), cfg.shooting.horizon)?;
                    let (a, score) = planner.plan(&mdp, &mut plan_rng)?;
                    utilities.push(score);
                    a
                }
                (Some(ens), false, AgentKind::Jdrx) => {
                    let mdp = ExplorationMdp::new(ens, utility.clone(), s.clone(), 1)?;
                    let mut best = (random_thrust(&mut plan_rng), f64::NEG_INFINITY);
                    for k in 0..cfg.reactive_candidates {
                        let a = if k == 0 { best.0.clone() } else { random_thrust(&mut plan_rng) };
                        let u = mdp.utility(&s, &a)?;
                        if u > best.1 {
                            best = (a, u);
                        }
                    }
                    utilities.push(best.1);
                    best.0
                }
                (Some(ens), false, AgentKind::Perx) => {
                    let stats = ens.stats().expect("trained ensemble has statistics");
                    let past = past_errors.as_ref().expect("errors computed after fitting");
                    let mut best = (random_thrust(&mut plan_rng), f64::NEG_INFINITY);
                    for k in 0..cfg.reactive_candidates {
                        let a = if k == 0 { best.0.clone() } else { random_thrust(&mut plan_rng) };
                        let u = past.score(stats, &s, &a)?;
                        if u > best.1 {
                            best = (a, u);
                        }
                    }
                    utilities.push(best.1);
                    best.0
                }
                _ => random_thrust(&mut policy_rng),
            };
            let step = env.step(&action)?;
            let next_true = env.true_state().to_vec();
            max_position = max_position.max(next_true[0]);
            history.push(Transition::new(s, action.clone(), step.state.clone()));
            true_history.push(Transition::new(
                State::Continuous(true_s),
                action,
                State::Continuous(next_true.clone()),
            ));
            s = step.state;
            true_s = next_true;

            let total = env.total_steps() as usize;
            if let Some(ens) = ensemble.as_mut() {
                let fit = if total == cfg.schedule.warmup_steps {
                    Some(cfg.schedule.initial_epochs)
                } else if total > cfg.schedule.warmup_steps {
                    steps_since_fit += 1;
                    (steps_since_fit >= cfg.schedule.train_every).then_some(cfg.schedule.epochs)
                } else {
                    None
                };
                if let Some(epochs) = fit {
                    ens.train(&history, &train_config(cfg, epochs))?;
                    steps_since_fit = 0;
                    if cfg.agent == AgentKind::Perx {
                        past_errors = Some(PastErrors::new(ens, &history)?);
                    }
                }
            }
            if step.done || total >= cfg.steps {
                break;
            }
        }
        let coverage = coverage_map(&true_history, COVERAGE_BINS, MOUNTAIN_CAR_BOUNDS)?;
        let row = EpisodeRow {
            episode,
            env_steps: env.total_steps(),
            explored_fraction: coverage.fraction,
            mean_plan_utility: mean(&utilities),
            max_position: Some(max_position),
        };
        sink.record(&row)?;
        rows.push(row);
    }
    let coverage: CoverageMap = coverage_map(&true_history, COVERAGE_BINS, MOUNTAIN_CAR_BOUNDS)?;
    Ok(RunRecord {
        summary: RunSummary {
            agent: cfg.agent.name().to_string(),
            seed: cfg.seed,
            episodes: rows.len(),
            total_steps: env.total_steps(),
            final_fraction: coverage.fraction,
            episodes_to_full: None,
            max_position: Some(max_position),
        },
        rows,
        coverage: Some(coverage),
    })
}
