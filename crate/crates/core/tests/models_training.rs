use max_core::envs::{ChainConfig, ChainEnv, Environment};
use max_core::models::{
    EnsembleConfig, History, Member, ModelEnsemble, NetworkModel, NormStats, Normalizer, Predictive,
    TrainConfig, Transition,
};
use max_core::netcore::{Activation, HeadKind, LogVarBounds, Mlp, MlpSpec, Optimizer, OptimizerConfig};
use max_core::rng::SeedTree;
use max_core::{Action, ActionSpace, State, StateSpace};
use proptest::prelude::*;

#[test]
fn full_chain_table_is_learned_in_150_iterations() {
    let env = ChainEnv::new(ChainConfig::new(10), 8).unwrap();
    let table = env.transition_table();
    let mut history = History::new();
    for s in 0..10 {
        for a in 0..2 {
            let next = table.row(s, a).argmax();
            history.push(Transition::new(State::Discrete(s), Action::Discrete(a), State::Discrete(next)));
        }
    }
    let mut ens = ModelEnsemble::new(
        env.state_space(),
        env.action_space(),
        &EnsembleConfig::discrete_default(),
        SeedTree::new(8),
    )
    .unwrap();
    ens.train(&history, &TrainConfig { epochs: 150, ..TrainConfig::default() }).unwrap();
    for s in 0..10 {
        for a in 0..2 {
            for p in ens.predict_all(&State::Discrete(s), &Action::Discrete(a)).unwrap() {
                let Predictive::Categorical(d) = p else { panic!("categorical ensemble") };
                assert_eq!(d.argmax(), table.row(s, a).argmax(), "pair ({s}, {a})");
            }
        }
    }
}

fn gaussian_member(bias: &[f64]) -> Member {
    // 2-d state + 1-d action in, mean and log-variance for 2 dims out.
    let spec = MlpSpec::new(vec![3, 4], Activation::Swish, HeadKind::GaussianDiag);
    let mut params = vec![0.0; 3 * 4];
    params.extend_from_slice(bias);
    let net = Mlp::from_params(spec, params).unwrap();
    let opt = Optimizer::new(OptimizerConfig::adam(1e-3), net.num_params()).unwrap();
    Member::Network(NetworkModel { net, opt })
}

fn gaussian_ensemble(biases: &[[f64; 4]], delta: Normalizer) -> ModelEnsemble {
    let members = biases.iter().map(|b| gaussian_member(b)).collect();
    let mut ens = ModelEnsemble::from_members(
        StateSpace::Continuous { dim: 2 },
        ActionSpace::Continuous { low: vec![-1.0], high: vec![1.0] },
        members,
        LogVarBounds::default(),
    )
    .unwrap();
    let stats = NormStats {
        state: Normalizer { mean: vec![-0.5, 0.0], std: vec![0.3, 0.02] },
        action: Normalizer::identity(1),
        delta,
    };
    ens.assume_trained(Some(stats)).unwrap();
    ens
}

#[test]
fn zero_head_predicts_the_mean_delta() {
    let delta = Normalizer { mean: vec![0.01, -0.002], std: vec![0.05, 0.004] };
    let ens = gaussian_ensemble(&[[0.0; 4], [0.0; 4], [0.0; 4]], delta);
    let s = State::Continuous(vec![-0.45, 0.01]);
    for p in ens.predict_all(&s, &Action::Continuous(vec![0.3])).unwrap() {
        let Predictive::Gaussian(g) = p else { panic!("gaussian ensemble") };
        assert!((g.mean()[0] - (-0.44)).abs() < 1e-12);
        assert!((g.mean()[1] - 0.008).abs() < 1e-12);
    }
}

#[test]
fn identical_members_predict_identically() {
    let delta = Normalizer { mean: vec![0.0, 0.0], std: vec![1.0, 1.0] };
    let b = [0.3, -0.2, -1.0, -2.0];
    let ens = gaussian_ensemble(&[b, b, b, b], delta);
    let preds = ens.predict_all(&State::Continuous(vec![0.1, 0.0]), &Action::Continuous(vec![-1.0])).unwrap();
    assert!(preds.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn narrow_member_samples_stay_near_the_mean() {
    let delta = Normalizer { mean: vec![0.0, 0.0], std: vec![1.0, 1.0] };
    let ens = gaussian_ensemble(&[[0.2, -0.1, -60.0, -60.0]], delta);
    let s = State::Continuous(vec![0.0, 0.0]);
    let a = Action::Continuous(vec![0.0]);
    let mut rng = SeedTree::new(5).rng("samples");
    for _ in 0..1000 {
        let next = ens.sample_next(&s, &a, 0, &mut rng).unwrap();
        let v = next.values().unwrap();
        assert!((v[0] - 0.2).abs() < 1e-3 && (v[1] + 0.1).abs() < 1e-3, "{v:?}");
    }
}

#[test]
fn seeded_sampling_repeats() {
    let delta = Normalizer { mean: vec![0.0, 0.0], std: vec![1.0, 1.0] };
    let ens = gaussian_ensemble(&[[0.0, 0.0, -1.0, -1.0], [1.0, 0.0, -1.0, -1.0]], delta);
    let s = State::Continuous(vec![0.0, 0.0]);
    let a = Action::Continuous(vec![0.5]);
    let draw = |seed| {
        let mut rng = SeedTree::new(seed).rng("samples");
        (0..50).map(|k| ens.sample_next(&s, &a, k % 2, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3), draw(4));
}

#[test]
fn trained_members_differ_but_agree_on_seen_pairs() {
    let mut env = ChainEnv::new(ChainConfig::new(12), 2).unwrap();
    let mut history = History::new();
    let mut s = env.reset();
    for t in 0..15 {
        let a = Action::Discrete(usize::from(t % 3 != 0));
        let st = env.step(&a).unwrap();
        history.push(Transition::new(s, a, st.state.clone()));
        s = st.state;
    }
    let mut ens = ModelEnsemble::new(
        env.state_space(),
        env.action_space(),
        &EnsembleConfig::discrete_default(),
        SeedTree::new(2),
    )
    .unwrap();
    ens.train(&history, &TrainConfig { epochs: 150, ..TrainConfig::default() }).unwrap();
    let params: Vec<&[f64]> = ens
        .members()
        .iter()
        .map(|m| match m {
            Member::Network(n) => n.net.params(),
            Member::Tabular(_) => panic!("network ensemble"),
        })
        .collect();
    assert!(params[0].iter().zip(params[1]).any(|(a, b)| a != b));

    let jsd = |s: usize, a: usize| {
        let dists: Vec<_> = ens
            .predict_all(&State::Discrete(s), &Action::Discrete(a))
            .unwrap()
            .into_iter()
            .map(|p| match p {
                Predictive::Categorical(d) => d,
                Predictive::Gaussian(_) => unreachable!(),
            })
            .collect();
        max_core::divergence::jsd_categorical(&dists).unwrap()
    };
    let seen: std::collections::BTreeSet<(usize, usize)> = history
        .transitions()
        .iter()
        .map(|t| (t.s.index().unwrap(), t.a.index().unwrap()))
        .collect();
    let mut unseen: Vec<f64> = (0..12)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .filter(|p| !seen.contains(p))
        .map(|(s, a)| jsd(s, a))
        .collect();
    unseen.sort_by(f64::total_cmp);
    let median = unseen[unseen.len() / 2];
    for &(s, a) in &seen {
        assert!(jsd(s, a) < median, "seen pair ({s}, {a})");
    }
}

proptest! {
    #[test]
    fn normalization_round_trips(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..20),
        x in prop::collection::vec(-50.0f64..50.0, 3),
    ) {
        let n = Normalizer::fit(3, rows.iter().map(Vec::as_slice));
        let (mut z, mut back) = (Vec::new(), Vec::new());
        n.normalize(&x, &mut z);
        n.denormalize(&z, &mut back);
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!(n.std.iter().all(|&s| s >= max_core::models::STD_FLOOR));
    }
}
