use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::exploration::SurrogateMdp;
use crate::math::sqrt;
use crate::rng::SimRng;
use crate::space::{Action, ActionSpace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShootingConfig {
    pub candidates: usize,
    pub horizon: usize,
    /// Refinement rounds after the initial uniform draw; 0 is plain random
    /// shooting.
    pub cem_iterations: usize,
    pub elite_fraction: f64,
    /// Standard deviation, as a fraction of the action range, used around a
    /// warm-start mean.
    pub init_std: f64,
    /// Imagined rollouts averaged per candidate.
    pub rollouts: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            candidates: 64,
            horizon: 20,
            cem_iterations: 2,
            elite_fraction: 0.125,
            init_std: 0.5,
            rollouts: 1,
        }
    }
}

impl ShootingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates < 2 {
            return Err(Error::validation("shooting needs at least two candidates"));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(Error::validation("elite fraction must lie in (0, 1)"));
        }
        if self.horizon == 0 || self.rollouts == 0 {
            return Err(Error::validation("horizon and rollouts must be positive"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::validation("initial std must be positive"));
        }
        Ok(())
    }
}

/// Receding-horizon planner that keeps the best sequence of the previous call
/// (shifted by one step) as the centre of its next search.
#[derive(Debug, Clone)]
pub struct ShootingPlanner {
    config: ShootingConfig,
    warm_start: Option<Vec<Vec<f64>>>,
}

type Sequence = Vec<Vec<f64>>;

impl ShootingPlanner {
    pub fn new(config: ShootingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            warm_start: None,
        })
    }

    pub fn config(&self) -> &ShootingConfig {
        &self.config
    }

    /// Forgets the warm start, e.g. at an episode boundary.
    pub fn reset(&mut self) {
        self.warm_start = None;
    }

    pub fn plan<M: SurrogateMdp + ?Sized>(&mut self, mdp: &M, rng: &mut SimRng) -> Result<(Action, f64)> {
        let ActionSpace::Continuous { low, high } = mdp.action_space() else {
            return Err(Error::validation("shooting needs a continuous action space"));
        };
        let cfg = self.config;
        let horizon = cfg.horizon.min(mdp.horizon());
        let dim = low.len();
        let n_elite = ((cfg.elite_fraction * cfg.candidates as f64) as usize).max(1);

        let mut mean: Option<Sequence> = self.warm_start.take().map(|mut w| {
            w.resize_with(horizon, || midpoint(low, high));
            w.truncate(horizon);
            w
        });
        let mut std: Sequence = (0..horizon)
            .map(|_| low.iter().zip(high).map(|(l, h)| cfg.init_std * (h - l)).collect())
            .collect();

        let mut best: Option<(Sequence, f64)> = None;
        for round in 0..=cfg.cem_iterations {
            let mut scored: Vec<(Sequence, f64)> = Vec::with_capacity(cfg.candidates);
            for k in 0..cfg.candidates {
                let seq: Sequence = match &mean {
                    Some(m) if !(round == 0 && k == 0) => (0..horizon)
                        .map(|t| {
                            (0..dim)
                                .map(|d| {
                                    let z: f64 = StandardNormal.sample(rng);
                                    (m[t][d] + std[t][d] * z).clamp(low[d], high[d])
                                })
                                .collect()
                        })
                        .collect(),
                    Some(m) => m.clone(),
                    None => (0..horizon)
                        .map(|_| (0..dim).map(|d| uniform(rng, low[d], high[d])).collect())
                        .collect(),
                };
                let plan: Vec<Action> = seq.iter().map(|a| Action::Continuous(a.clone())).collect();
                let score = mdp.evaluate_plan(&plan, cfg.rollouts, rng)?;
                if !score.is_finite() {
                    return Err(Error::numeric("candidate score is not finite"));
                }
                scored.push((seq, score));
            }
            for (seq, score) in &scored {
                if best.as_ref().is_none_or(|(_, b)| *score > *b) {
                    best = Some((seq.clone(), *score));
                }
            }
            if round == cfg.cem_iterations {
                break;
            }
            let mut order: Vec<usize> = (0..scored.len()).collect();
            order.sort_by(|&i, &j| scored[j].1.total_cmp(&scored[i].1).then(i.cmp(&j)));
            let elites: Vec<&Sequence> = order[..n_elite].iter().map(|&i| &scored[i].0).collect();
            let mut m = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let mut mt = Vec::with_capacity(dim);
                for d in 0..dim {
                    let mu = elites.iter().map(|e| e[t][d]).sum::<f64>() / n_elite as f64;
                    let var = elites.iter().map(|e| (e[t][d] - mu) * (e[t][d] - mu)).sum::<f64>() / n_elite as f64;
                    std[t][d] = sqrt(var).max(1e-3 * (high[d] - low[d]));
                    mt.push(mu);
                }
                m.push(mt);
            }
            mean = Some(m);
        }
        let (seq, score) = best.expect("at least one candidate");
        let first = Action::Continuous(seq[0].clone());
        let mut shifted = seq;
        shifted.remove(0);
        self.warm_start = Some(shifted);
        Ok((first, score))
    }
}

fn midpoint(low: &[f64], high: &[f64]) -> Vec<f64> {
    low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect()
}

fn uniform(rng: &mut SimRng, low: f64, high: f64) -> f64 {
    if high > low {
        rng.random_range(low..=high)
    } else {
        low
    }
}

/// One-shot planning without warm start; returns the first action of the
/// best-scoring candidate. Ties go to the candidate sampled first.
pub fn shooting_plan<M: SurrogateMdp + ?Sized>(mdp: &M, cfg: &ShootingConfig, rng: &mut SimRng) -> Result<Action> {
    ShootingPlanner::new(*cfg)?.plan(mdp, rng).map(|(a, _)| a)
}
