//! The exploration MDP: the agent's current state as a point-mass start, an
//! ensemble member drawn uniformly at every imagined transition, and the
//! members' disagreement as reward.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use rand::Rng;

use crate::divergence::{
    jrd_gaussians, jsd_categorical, rescale_variances, CategoricalDist, GaussianDiag,
    VarianceTempering,
};
use crate::models::{EnsembleMode, ModelEnsemble, Predictive, Transition};
use crate::rng::SimRng;
use crate::space::{Action, ActionSpace, State, StateSpace};
use crate::{Error, Result};

/// How disagreement between members is scored.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum UtilityKind {
    /// Jensen-Shannon divergence of categorical predictions.
    Jsd,
    /// Jensen-Rényi divergence of tempered Gaussian predictions.
    Jrd { tempering: VarianceTempering },
    /// Mean pairwise squared distance between member means.
    PredError,
    /// Variance across per-member imagined trajectories, summed over
    /// state dimensions.
    TrajVariance,
}

impl UtilityKind {
    fn check_mode(&self, mode: EnsembleMode) -> Result<()> {
        let ok = match self {
            UtilityKind::Jsd => mode == EnsembleMode::Categorical,
            _ => mode == EnsembleMode::GaussianDelta,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("utility {self:?} does not fit a {mode:?} ensemble")))
        }
    }
}

/// A decision process the planners can search without touching the real
/// environment.
pub trait SurrogateMdp {
    fn initial_state(&self) -> &State;
    fn action_space(&self) -> &ActionSpace;
    fn horizon(&self) -> usize;

    /// One imagined transition: the sampled next state and the reward for
    /// taking `a` in `s`.
    fn step(&self, s: &State, a: &Action, rng: &mut SimRng) -> Result<(State, f64)>;

    /// Mean undiscounted return of `plan` from the initial state over
    /// `n_rollouts` sampled trajectories.
    fn evaluate_plan(&self, plan: &[Action], n_rollouts: usize, rng: &mut SimRng) -> Result<f64> {
        check_plan(plan.len(), self.horizon(), n_rollouts)?;
        let mut total = 0.0;
        for _ in 0..n_rollouts {
            let mut s = self.initial_state().clone();
            for a in plan {
                let (next, u) = self.step(&s, a, rng)?;
                total += u;
                s = next;
            }
        }
        Ok(total / n_rollouts as f64)
    }
}

pub(crate) fn check_plan(len: usize, horizon: usize, n_rollouts: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::validation("plan is empty"));
    }
    if len > horizon {
        return Err(Error::validation(format!("plan of {len} steps exceeds horizon {horizon}")));
    }
    if n_rollouts == 0 {
        return Err(Error::validation("need at least one rollout"));
    }
    Ok(())
}

/// One imagined step.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaginedStep {
    pub state: State,
    pub action: Action,
    pub member: usize,
    pub next_state: State,
    pub utility: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImaginedTrajectory {
    pub steps: Vec<ImaginedStep>,
}

impl ImaginedTrajectory {
    pub fn cumulative_utility(&self) -> f64 {
        self.steps.iter().map(|s| s.utility).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone)]
struct CachedPair {
    utility: f64,
    dists: Vec<CategoricalDist>,
}

/// Exploration MDP over a frozen ensemble.
///
/// Discrete predictions are memoized per `(s, a)` for the lifetime of the
/// value, which is one planning call.
#[derive(Debug)]
pub struct ExplorationMdp<'a> {
    ensemble: &'a ModelEnsemble,
    utility: UtilityKind,
    initial: State,
    horizon: usize,
    action_space: ActionSpace,
    n_actions: usize,
    cache: RefCell<Vec<Option<CachedPair>>>,
}

impl<'a> ExplorationMdp<'a> {
    pub fn new(ensemble: &'a ModelEnsemble, utility: UtilityKind, initial: State, horizon: usize) -> Result<Self> {
        if !ensemble.is_trained() {
            return Err(Error::state("exploration needs a trained ensemble"));
        }
        utility.check_mode(ensemble.mode())?;
        if horizon == 0 {
            return Err(Error::validation("horizon must be positive"));
        }
        if !ensemble.state_space().contains(&initial) {
            return Err(Error::validation(format!("initial state {initial:?} is not in the state space")));
        }
        if let UtilityKind::Jrd { tempering } = &utility {
            if let StateSpace::Continuous { dim } = ensemble.state_space() {
                if tempering.sigma_upper().len() != *dim {
                    return Err(Error::validation("variance upper bound has the wrong dimension"));
                }
            }
        }
        let (n_actions, slots) = match (ensemble.state_space(), ensemble.action_space()) {
            (StateSpace::Discrete { n }, ActionSpace::Discrete { n: na }) => (*na, n * na),
            _ => (0, 0),
        };
        Ok(Self {
            ensemble,
            utility,
            initial,
            horizon,
            action_space: ensemble.action_space().clone(),
            n_actions,
            cache: RefCell::new(vec![None; slots]),
        })
    }

    pub fn ensemble(&self) -> &ModelEnsemble {
        self.ensemble
    }

    pub fn utility_kind(&self) -> &UtilityKind {
        &self.utility
    }

    fn cached(&self, s: &State, a: &Action) -> Result<CachedPair> {
        let slot = s.index()? * self.n_actions + a.index()?;
        if let Some(Some(hit)) = self.cache.borrow().get(slot) {
            return Ok(hit.clone());
        }
        let dists: Vec<CategoricalDist> = self
            .ensemble
            .predict_all_raw(s, a)?
            .into_iter()
            .map(|p| match p {
                Predictive::Categorical(c) => c,
                Predictive::Gaussian(_) => unreachable!("mode checked at construction"),
            })
            .collect();
        let utility = jsd_categorical(&dists)?;
        let entry = CachedPair { utility, dists };
        if let Some(cell) = self.cache.borrow_mut().get_mut(slot) {
            *cell = Some(entry.clone());
        }
        Ok(entry)
    }

    fn gaussians(&self, s: &State, a: &Action) -> Result<Vec<GaussianDiag>> {
        self.ensemble.predict_all_normalized(s, a)
    }

    fn gaussian_utility(&self, gs: &[GaussianDiag]) -> Result<f64> {
        match &self.utility {
            UtilityKind::Jrd { tempering } => {
                let tempered = rescale_variances(gs, tempering)?;
                Ok(jrd_gaussians(&tempered)?.max(0.0))
            }
            UtilityKind::PredError => Ok(mean_pairwise_sq_distance(gs)),
            UtilityKind::TrajVariance => Ok(mean_variance(gs.iter().map(|g| g.mean()))),
            UtilityKind::Jsd => unreachable!("mode checked at construction"),
        }
    }

    /// Disagreement of the members about `(s, a)`, never negative.
    pub fn utility(&self, s: &State, a: &Action) -> Result<f64> {
        match self.ensemble.mode() {
            EnsembleMode::Categorical => Ok(self.cached(s, a)?.utility),
            EnsembleMode::GaussianDelta => self.gaussian_utility(&self.gaussians(s, a)?),
        }
    }

    /// Draws a member uniformly, samples its next state and scores `(s, a)`.
    pub fn imagine_step(&self, s: &State, a: &Action, rng: &mut SimRng) -> Result<(State, f64, usize)> {
        let member = rng.random_range(0..self.ensemble.len());
        match self.ensemble.mode() {
            EnsembleMode::Categorical => {
                let entry = self.cached(s, a)?;
                let next = entry.dists[member].sample_with(rng.random::<f64>());
                Ok((State::Discrete(next), entry.utility, member))
            }
            EnsembleMode::GaussianDelta => {
                let gs = self.gaussians(s, a)?;
                let u = self.gaussian_utility(&gs)?;
                let next = self
                    .ensemble
                    .sample_from(s, &Predictive::Gaussian(gs[member].clone()), rng)?;
                Ok((next, u, member))
            }
        }
    }

    /// Rolls out `plan` once, recording every imagined step.
    pub fn imagine(&self, plan: &[Action], rng: &mut SimRng) -> Result<ImaginedTrajectory> {
        check_plan(plan.len(), self.horizon, 1)?;
        let mut out = ImaginedTrajectory::default();
        let mut s = self.initial.clone();
        for a in plan {
            let (next, utility, member) = self.imagine_step(&s, a, rng)?;
            out.steps.push(ImaginedStep {
                state: s,
                action: a.clone(),
                member,
                next_state: next.clone(),
                utility,
            });
            s = next;
        }
        Ok(out)
    }

    /// Each member follows `plan` on its own sampled trajectory; the reward
    /// at every step is the variance of the members' states.
    fn trajectory_variance(&self, plan: &[Action], rng: &mut SimRng) -> Result<f64> {
        let stats = self
            .ensemble
            .stats()
            .ok_or_else(|| Error::state("missing normalization statistics"))?;
        let n = self.ensemble.len();
        let mut states = vec![self.initial.clone(); n];
        let mut scaled: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut total = 0.0;
        for a in plan {
            for (m, s) in states.iter_mut().enumerate() {
                *s = self.ensemble.sample_next(s, a, m, rng)?;
                scaled[m].clear();
                stats.state.normalize(s.values()?, &mut scaled[m]);
            }
            total += mean_variance(scaled.iter().map(|v| v.as_slice()));
        }
        Ok(total)
    }
}

impl SurrogateMdp for ExplorationMdp<'_> {
    fn initial_state(&self) -> &State {
        &self.initial
    }

    fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step(&self, s: &State, a: &Action, rng: &mut SimRng) -> Result<(State, f64)> {
        let (next, u, _) = self.imagine_step(s, a, rng)?;
        Ok((next, u))
    }

    fn evaluate_plan(&self, plan: &[Action], n_rollouts: usize, rng: &mut SimRng) -> Result<f64> {
        check_plan(plan.len(), self.horizon, n_rollouts)?;
        let mut total = 0.0;
        for _ in 0..n_rollouts {
            total += if self.utility == UtilityKind::TrajVariance {
                self.trajectory_variance(plan, rng)?
            } else {
                let mut s = self.initial.clone();
                let mut sum = 0.0;
                for a in plan {
                    let (next, u, _) = self.imagine_step(&s, a, rng)?;
                    sum += u;
                    s = next;
                }
                sum
            };
        }
        Ok(total / n_rollouts as f64)
    }
}

/// `(1/N²) Σ_ij |μ_i − μ_j|²`.
fn mean_pairwise_sq_distance(gs: &[GaussianDiag]) -> f64 {
    let n = gs.len() as f64;
    let mut total = 0.0;
    for gi in gs {
        for gj in gs {
            total += gi.mean().iter().zip(gj.mean()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    total / (n * n)
}

/// Per-dimension population variance across points, summed over dimensions.
fn mean_variance<'p>(points: impl Iterator<Item = &'p [f64]> + Clone) -> f64 {
    let n = points.clone().count() as f64;
    let Some(first) = points.clone().next() else { return 0.0 };
    let dim = first.len();
    let mut total = 0.0;
    for d in 0..dim {
        let mean = points.clone().map(|p| p[d]).sum::<f64>() / n;
        total += points.clone().map(|p| (p[d] - mean) * (p[d] - mean)).sum::<f64>() / n;
    }
    total
}

/// Mean over members of the squared error between the member's predicted
/// mean and the observed next state, in normalized delta space.
pub fn prediction_error(ensemble: &ModelEnsemble, t: &Transition) -> Result<f64> {
    let gs = ensemble.predict_all_normalized(&t.s, &t.a)?;
    let stats = ensemble
        .stats()
        .ok_or_else(|| Error::state("missing normalization statistics"))?;
    let s = t.s.values()?;
    let delta: Vec<f64> = t.s_next.values()?.iter().zip(s).map(|(y, x)| y - x).collect();
    let mut target = Vec::with_capacity(delta.len());
    stats.delta.normalize(&delta, &mut target);
    let total: f64 = gs
        .iter()
        .map(|g| g.mean().iter().zip(&target).map(|(m, y)| (m - y) * (m - y)).sum::<f64>())
        .sum();
    Ok(total / gs.len() as f64)
}
