//! Oracle self-checks run by `max-explore check` and by the acceptance suite.
//!
//! Each check compares a closed-form or learned quantity against an
//! independent computation: numerical integration for the Rényi divergence,
//! central finite differences for gradients, exhaustive enumeration for tree
//! search.

use std::f64::consts::{LN_2, PI};

use max_core::divergence::{jrd_gaussians, jsd_categorical, CategoricalDist, GaussianDiag};
use max_core::exploration::SurrogateMdp;
use max_core::netcore::{
    loss_and_gradient, Activation, Batch, HeadKind, Loss, Mlp, MlpSpec,
};
use max_core::planners::{mcts_search, shooting_plan, MctsConfig, ShootingConfig};
use max_core::rng::{SeedTree, SimRng};
use max_core::{Action, ActionSpace, State};
use rand::Rng;
use serde::Serialize;

pub const JRD_TRIALS: usize = 200;
pub const JRD_REL_TOL: f64 = 1e-4;
pub const JRD_ZERO_TOL: f64 = 1e-9;
pub const JRD_DISJOINT_TOL: f64 = 1e-3;

pub const JSD_TOL: f64 = 1e-9;

pub const GRAD_CONFIGS: usize = 20;
pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

pub const MCTS_TRIALS: usize = 100;
pub const MCTS_ITERATIONS: usize = 1000;
pub const SHOOTING_TOL: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.extend(jrd_checks(0));
    out.extend(jsd_checks(0));
    out.push(gradient_check(0));
    out.push(mcts_enumeration_check(0));
    out.push(shooting_quadratic_check(0));
    out
}

/// Running maximum that treats NaN as the worst possible value.
fn worse(acc: f64, x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        acc.max(x)
    }
}

/// Trapezoid rule on a uniform grid; spectrally accurate for Gaussian tails.
fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut acc = 0.5 * (f(lo) + f(hi));
    for i in 1..n {
        acc += f(lo + i as f64 * h);
    }
    acc * h
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

/// Quadratic Rényi entropy `−ln ∫ p²` of an equally weighted 1-d mixture,
/// by quadrature.
fn renyi2_by_quadrature(components: &[(f64, f64)]) -> f64 {
    let sd_max = components.iter().map(|c| c.1.sqrt()).fold(0.0, f64::max);
    let sd_min = components.iter().map(|c| c.1.sqrt()).fold(f64::INFINITY, f64::min);
    let lo = components.iter().map(|c| c.0).fold(f64::INFINITY, f64::min) - 12.0 * sd_max;
    let hi = components.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max) + 12.0 * sd_max;
    let n = (((hi - lo) / (sd_min / 20.0)).ceil() as usize).max(1000);
    let w = 1.0 / components.len() as f64;
    let density = |x: f64| components.iter().map(|&(m, v)| w * normal_pdf(x, m, v)).sum::<f64>();
    -integrate(|x| density(x).powi(2), lo, hi, n).ln()
}

/// `H₂(mixture) − mean H₂(member)` by quadrature.
pub fn jrd_oracle(components: &[(f64, f64)]) -> f64 {
    let mixture = renyi2_by_quadrature(components);
    let members = components.iter().map(|&c| renyi2_by_quadrature(&[c])).sum::<f64>()
        / components.len() as f64;
    mixture - members
}

fn gaussians(components: &[(f64, f64)]) -> Vec<GaussianDiag> {
    components
        .iter()
        .map(|&(m, v)| GaussianDiag::new(vec![m], vec![v]).expect("valid gaussian"))
        .collect()
}

pub fn jrd_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = SeedTree::new(seed).rng("jrd-check");
    let mut worst = 0.0_f64;
    let mut failures = 0;
    for _ in 0..JRD_TRIALS {
        let n = rng.random_range(1..=8);
        let comps: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(-5.0..=5.0), rng.random_range(0.01..=4.0)))
            .collect();
        let closed = jrd_gaussians(&gaussians(&comps));
        let oracle = jrd_oracle(&comps);
        let err = match closed {
            Ok(c) if oracle.abs() < JRD_ZERO_TOL => (c - oracle).abs(),
            Ok(c) => (c - oracle).abs() / oracle.abs(),
            Err(_) => f64::INFINITY,
        };
        worst = worse(worst, err);
        if err > JRD_REL_TOL {
            failures += 1;
        }
    }
    let oracle = CheckResult::new(
        "jrd-quadrature",
        failures == 0,
        format!("{JRD_TRIALS} mixtures, worst relative error {worst:.2e}, {failures} over {JRD_REL_TOL:e}"),
    );

    let mut zero_worst = 0.0_f64;
    for _ in 0..50 {
        let dim = rng.random_range(1..=4);
        let mean: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..=5.0)).collect();
        let var: Vec<f64> = (0..dim).map(|_| rng.random_range(0.01..=4.0)).collect();
        let g = GaussianDiag::new(mean, var).expect("valid gaussian");
        let single = jrd_gaussians(std::slice::from_ref(&g)).map_or(f64::INFINITY, f64::abs);
        let n = rng.random_range(2..=8);
        let same = jrd_gaussians(&vec![g; n]).map_or(f64::INFINITY, f64::abs);
        zero_worst = worse(worse(zero_worst, single), same);
    }
    let zero = CheckResult::new(
        "jrd-zero",
        zero_worst <= JRD_ZERO_TOL,
        format!("single and identical members, largest |JRD| {zero_worst:.2e}"),
    );

    let mut disjoint_worst = 0.0_f64;
    for n in 2..=8 {
        let comps: Vec<(f64, f64)> = (0..n).map(|i| (100.0 * i as f64, 1.0)).collect();
        let v = jrd_gaussians(&gaussians(&comps)).unwrap_or(f64::NAN);
        let err = (v - (n as f64).ln()).abs();
        disjoint_worst = worse(disjoint_worst, err);
    }
    let disjoint = CheckResult::new(
        "jrd-disjoint",
        disjoint_worst <= JRD_DISJOINT_TOL,
        format!("well separated members vs ln N, worst error {disjoint_worst:.2e}"),
    );
    vec![oracle, zero, disjoint]
}

/// Shannon entropy written out independently of the library.
fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn jsd_by_hand(dists: &[Vec<f64>]) -> f64 {
    let n = dists.len() as f64;
    let k = dists[0].len();
    let mix: Vec<f64> = (0..k).map(|j| dists.iter().map(|d| d[j]).sum::<f64>() / n).collect();
    shannon(&mix) - dists.iter().map(|d| shannon(d)).sum::<f64>() / n
}

fn random_simplex(rng: &mut SimRng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn categorical(p: &[f64]) -> CategoricalDist {
    CategoricalDist::new(p.to_vec()).expect("valid distribution")
}

pub fn jsd_checks(seed: u64) -> Vec<CheckResult> {
    let half = vec![0.5, 0.5];
    let hand = [
        (vec![vec![1.0, 0.0], vec![0.0, 1.0]], LN_2),
        (vec![half.clone(), half.clone(), vec![1.0, 0.0]], 0.174416),
    ];
    let mut hand_worst = 0.0_f64;
    for (dists, expected) in &hand {
        let d: Vec<_> = dists.iter().map(|p| categorical(p)).collect();
        let v = jsd_categorical(&d).unwrap_or(f64::NAN);
        let oracle = jsd_by_hand(dists);
        hand_worst = worse(hand_worst, (v - oracle).abs());
        // The printed value is rounded to six places.
        hand_worst = worse(hand_worst, ((v - expected).abs() - 5e-7).clamp(0.0, f64::INFINITY));
    }
    let known = CheckResult::new(
        "jsd-hand-values",
        hand_worst <= JSD_TOL,
        format!("worst deviation from hand-computed values {hand_worst:.2e}"),
    );

    let mut rng = SeedTree::new(seed).rng("jsd-check");
    let mut bad = Vec::new();
    for trial in 0..500 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(2..=10);
        let dists: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(&mut rng, k)).collect();
        let d: Vec<_> = dists.iter().map(|p| categorical(p)).collect();
        let v = jsd_categorical(&d).unwrap_or(f64::NAN);
        if !(v >= -JSD_TOL && v <= (n as f64).ln() + JSD_TOL) {
            bad.push(format!("trial {trial}: {v} outside [0, ln {n}]"));
        }
        if (v - jsd_by_hand(&dists)).abs() > JSD_TOL {
            bad.push(format!("trial {trial}: {v} vs direct {}", jsd_by_hand(&dists)));
        }
        let mut shuffled = d.clone();
        shuffled.reverse();
        if n > 2 {
            shuffled.swap(0, n / 2);
        }
        let w = jsd_categorical(&shuffled).unwrap_or(f64::NAN);
        if (v - w).abs() > JSD_TOL {
            bad.push(format!("trial {trial}: permutation changed {v} to {w}"));
        }
        let same = jsd_categorical(&vec![d[0].clone(); n]).unwrap_or(f64::NAN);
        if same.abs() > JSD_TOL {
            bad.push(format!("trial {trial}: identical members give {same}"));
        }
        if n > 1 && dists[0] != dists[1] && v <= JSD_TOL {
            bad.push(format!("trial {trial}: distinct members give {v}"));
        }
    }
    let props = CheckResult::new(
        "jsd-properties",
        bad.is_empty(),
        if bad.is_empty() {
            "bounds, permutation invariance and zero-iff-identical on 500 random ensembles".into()
        } else {
            bad.join("; ")
        },
    );
    vec![known, props]
}

/// Worst relative error between backprop and central differences for one
/// network and batch.
pub fn gradient_error(net: &mut Mlp, batch: &Batch, loss: Loss) -> f64 {
    let (_, analytic) = loss_and_gradient(net, batch, loss).expect("loss evaluates");
    let mut worst = 0.0_f64;
    for i in 0..net.num_params() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + GRAD_STEP;
        let up = loss_and_gradient(net, batch, loss).expect("loss evaluates").0;
        net.params_mut()[i] = orig - GRAD_STEP;
        let down = loss_and_gradient(net, batch, loss).expect("loss evaluates").0;
        net.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_STEP);
        let scale = analytic[i].abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worse(worst, (analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// One random network, head, loss and batch.
pub fn random_gradient_case(rng: &mut SimRng, head: HeadKind) -> (Mlp, Batch, Loss) {
    let input = rng.random_range(1..=5);
    let out = rng.random_range(1..=4);
    let depth = rng.random_range(1..=3);
    let mut widths = vec![input];
    widths.extend((0..depth).map(|_| rng.random_range(2..=8)));
    let (head_width, target_width, loss) = match head {
        HeadKind::Linear => (out, out, Loss::Huber { delta: rng.random_range(0.5..=2.0) }),
        HeadKind::Categorical => (out + 1, out + 1, Loss::CrossEntropy),
        HeadKind::GaussianDiag => (2 * out, out, Loss::NllGaussian),
    };
    widths.push(head_width);
    let activation = if rng.random::<bool>() { Activation::Tanh } else { Activation::Swish };
    let net = Mlp::new(MlpSpec::new(widths, activation, head), rng).expect("valid spec");
    let mut batch = Batch::new(input, target_width);
    for _ in 0..rng.random_range(1..=6) {
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.5..=1.5)).collect();
        let y: Vec<f64> = match head {
            HeadKind::Categorical => random_simplex(rng, target_width),
            _ => (0..target_width).map(|_| rng.random_range(-2.0..=2.0)).collect(),
        };
        batch.push_weighted(&x, &y, rng.random_range(0.5..=2.0));
    }
    (net, batch, loss)
}

pub fn gradient_check(seed: u64) -> CheckResult {
    let mut rng = SeedTree::new(seed).rng("gradient-check");
    let heads = [HeadKind::Linear, HeadKind::Categorical, HeadKind::GaussianDiag];
    let mut worst = 0.0_f64;
    let mut failures = 0;
    for _ in 0..GRAD_CONFIGS {
        for head in heads {
            let (mut net, batch, loss) = random_gradient_case(&mut rng, head);
            let err = gradient_error(&mut net, &batch, loss);
            worst = worse(worst, err);
            if err > GRAD_REL_TOL {
                failures += 1;
            }
        }
    }
    CheckResult::new(
        "gradient-finite-difference",
        failures == 0,
        format!(
            "{GRAD_CONFIGS} configurations x 3 heads, worst relative error {worst:.2e}, {failures} over {GRAD_REL_TOL:e}"
        ),
    )
}

/// Deterministic binary-tree MDP: the state encodes the action prefix and
/// every node carries a fixed reward.
#[derive(Debug, Clone)]
pub struct TreeMdp {
    start: State,
    actions: ActionSpace,
    horizon: usize,
    rewards: Vec<f64>,
}

impl TreeMdp {
    pub fn random(rng: &mut SimRng, horizon: usize) -> Self {
        let nodes = (1 << (horizon + 1)) - 2;
        Self {
            start: State::Discrete(1),
            actions: ActionSpace::Discrete { n: 2 },
            horizon,
            rewards: (0..nodes).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// Best first action by enumerating every action sequence.
    pub fn enumerate_best(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for seq in 0..(1usize << self.horizon) {
            let mut code = 1;
            let mut total = 0.0;
            for t in 0..self.horizon {
                let a = (seq >> (self.horizon - 1 - t)) & 1;
                code = 2 * code + a;
                total += self.rewards[code - 2];
            }
            let first = seq >> (self.horizon - 1);
            if total > best.1 {
                best = (first, total);
            }
        }
        best
    }
}

impl SurrogateMdp for TreeMdp {
    fn initial_state(&self) -> &State {
        &self.start
    }
    fn action_space(&self) -> &ActionSpace {
        &self.actions
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn step(&self, s: &State, a: &Action, _: &mut SimRng) -> max_core::Result<(State, f64)> {
        let code = 2 * s.index()? + a.index()?;
        Ok((State::Discrete(code), self.rewards[code - 2]))
    }
}

pub fn mcts_enumeration_check(seed: u64) -> CheckResult {
    let tree = SeedTree::new(seed);
    let mut rng = tree.rng("mcts-check");
    let mut misses = Vec::new();
    for trial in 0..MCTS_TRIALS {
        let horizon = 1 + trial % 3;
        let mdp = TreeMdp::random(&mut rng, horizon);
        let (best, _) = mdp.enumerate_best();
        let cfg = MctsConfig {
            iterations: MCTS_ITERATIONS,
            trajectories: 5,
            horizon,
            seed: tree.indexed_seed("mcts-trial", trial as u64),
        };
        match mcts_search(&mdp, &cfg) {
            Ok(r) if r.action == best => {}
            Ok(r) => misses.push(format!("trial {trial}: chose {} not {best}", r.action)),
            Err(e) => misses.push(format!("trial {trial}: {e}")),
        }
    }
    CheckResult::new(
        "mcts-enumeration",
        misses.is_empty(),
        format!(
            "{}/{MCTS_TRIALS} searches matched enumeration{}",
            MCTS_TRIALS - misses.len(),
            if misses.is_empty() { String::new() } else { format!(": {}", misses.join("; ")) }
        ),
    )
}

#[derive(Debug, Clone)]
struct Quadratic {
    start: State,
    actions: ActionSpace,
    optimum: Vec<f64>,
}

impl SurrogateMdp for Quadratic {
    fn initial_state(&self) -> &State {
        &self.start
    }
    fn action_space(&self) -> &ActionSpace {
        &self.actions
    }
    fn horizon(&self) -> usize {
        1
    }
    fn step(&self, s: &State, a: &Action, _: &mut SimRng) -> max_core::Result<(State, f64)> {
        let d: f64 = a.values()?.iter().zip(&self.optimum).map(|(x, o)| (x - o).powi(2)).sum();
        Ok((s.clone(), -d))
    }
}

pub fn shooting_quadratic_check(seed: u64) -> CheckResult {
    let tree = SeedTree::new(seed);
    let mut rng = tree.rng("shooting-check");
    let cfg = ShootingConfig { horizon: 1, ..ShootingConfig::default() };
    let mut worst = 0.0_f64;
    for trial in 0..20 {
        let optimum = vec![rng.random_range(-0.8..=0.8)];
        let mdp = Quadratic {
            start: State::Continuous(vec![0.0]),
            actions: ActionSpace::Continuous { low: vec![-1.0], high: vec![1.0] },
            optimum: optimum.clone(),
        };
        let mut plan_rng = tree.indexed_rng("shooting-trial", trial);
        let err = match shooting_plan(&mdp, &cfg, &mut plan_rng) {
            Ok(a) => a.values().map_or(f64::INFINITY, |v| (v[0] - optimum[0]).abs()),
            Err(_) => f64::INFINITY,
        };
        worst = worse(worst, err);
    }
    CheckResult::new(
        "shooting-quadratic",
        worst <= SHOOTING_TOL,
        format!("20 random optima, worst distance {worst:.4}"),
    )
}
