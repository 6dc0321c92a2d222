use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::exploration::SurrogateMdp;
use crate::rng::SimRng;
use crate::space::{Action, ActionSpace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MctsConfig {
    pub iterations: usize,
    /// Random rollouts evaluated at every expansion.
    pub trajectories: usize,
    /// Search depth; the MDP's own horizon is used when it is shorter.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            iterations: 25,
            trajectories: 5,
            horizon: 15,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    children: Vec<Option<usize>>,
    samples: Vec<f64>,
}

impl Node {
    fn new(n_actions: usize) -> Self {
        Self {
            children: vec![None; n_actions],
            samples: Vec::new(),
        }
    }

    fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// Outcome of one search.
#[derive(Debug, Clone, PartialEq)]
pub struct MctsResult {
    pub action: usize,
    /// Average backed-up return of each root child (`NaN` if never expanded).
    pub child_values: Vec<f64>,
    pub child_visits: Vec<usize>,
}

/// Searches over open-loop action sequences and returns the first action of
/// the most promising one.
///
/// Children are expanded in index order before any is compared. After that
/// each level descends into the child whose uniformly drawn stored return is
/// largest. Every expansion runs `trajectories` random continuations to the
/// search depth and appends each return to all nodes on the path. The tree is
/// dropped on return.
pub fn mcts_search<M: SurrogateMdp + ?Sized>(mdp: &M, cfg: &MctsConfig) -> Result<MctsResult> {
    let ActionSpace::Discrete { n: n_actions } = *mdp.action_space() else {
        return Err(Error::validation("tree search needs a discrete action space"));
    };
    if n_actions == 0 {
        return Err(Error::validation("action space is empty"));
    }
    if cfg.iterations == 0 || cfg.trajectories == 0 {
        return Err(Error::validation("iterations and trajectories must be positive"));
    }
    let depth = cfg.horizon.min(mdp.horizon());
    if depth == 0 {
        return Err(Error::validation("search horizon must be positive"));
    }
    let mut rng = crate::rng::SeedTree::new(cfg.seed).rng("mcts");
    let mut nodes = vec![Node::new(n_actions)];
    let mut path = Vec::with_capacity(depth + 1);
    let mut plan: Vec<usize> = Vec::with_capacity(depth);

    for _ in 0..cfg.iterations {
        path.clear();
        plan.clear();
        path.push(0);
        let mut current = 0;
        while plan.len() < depth {
            if let Some(a) = nodes[current].children.iter().position(Option::is_none) {
                let id = nodes.len();
                nodes.push(Node::new(n_actions));
                nodes[current].children[a] = Some(id);
                plan.push(a);
                path.push(id);
                break;
            }
            let mut best = (0, f64::NEG_INFINITY);
            for (a, child) in nodes[current].children.iter().enumerate() {
                let samples = &nodes[child.expect("all expanded")].samples;
                let draw = samples[rng.random_range(0..samples.len())];
                if draw > best.1 {
                    best = (a, draw);
                }
            }
            current = nodes[current].children[best.0].expect("all expanded");
            plan.push(best.0);
            path.push(current);
        }
        for _ in 0..cfg.trajectories {
            let value = rollout(mdp, &plan, depth, n_actions, &mut rng)?;
            for &id in &path {
                nodes[id].samples.push(value);
            }
        }
    }

    let mut child_values = vec![f64::NAN; n_actions];
    let mut child_visits = vec![0; n_actions];
    let mut action = 0;
    let mut best = f64::NEG_INFINITY;
    for (a, child) in nodes[0].children.iter().enumerate() {
        if let Some(id) = child {
            let v = nodes[*id].mean();
            child_values[a] = v;
            child_visits[a] = nodes[*id].samples.len();
            if v > best {
                best = v;
                action = a;
            }
        }
    }
    Ok(MctsResult {
        action,
        child_values,
        child_visits,
    })
}

fn rollout<M: SurrogateMdp + ?Sized>(
    mdp: &M,
    plan: &[usize],
    depth: usize,
    n_actions: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    let mut s = mdp.initial_state().clone();
    let mut total = 0.0;
    for t in 0..depth {
        let a = match plan.get(t) {
            Some(&a) => a,
            None => rng.random_range(0..n_actions),
        };
        let (next, u) = mdp.step(&s, &Action::Discrete(a), rng)?;
        total += u;
        s = next;
    }
    if !total.is_finite() {
        return Err(Error::numeric("rollout return is not finite"));
    }
    Ok(total)
}
