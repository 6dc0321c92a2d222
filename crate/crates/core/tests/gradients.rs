use max_core::netcore::{loss_and_gradient, Activation, Batch, HeadKind, Loss, Mlp, MlpSpec};
use max_core::rng::{SeedTree, SimRng};
use rand::Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

fn finite_difference_error(net: &mut Mlp, batch: &Batch, loss: Loss) -> f64 {
    let (_, grad) = loss_and_gradient(net, batch, loss).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..net.num_params() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + STEP;
        let up = loss_and_gradient(net, batch, loss).unwrap().0;
        net.params_mut()[i] = orig - STEP;
        let down = loss_and_gradient(net, batch, loss).unwrap().0;
        net.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(FLOOR);
        assert!(err.is_finite());
        worst = worst.max(err);
    }
    worst
}

fn random_net(rng: &mut SimRng, input: usize, out: usize, head: HeadKind) -> Mlp {
    let widths = vec![input, rng.random_range(3..9), rng.random_range(3..9), rng.random_range(3..9), out];
    let activation = if rng.random() { Activation::Swish } else { Activation::Tanh };
    Mlp::new(MlpSpec::new(widths, activation, head), rng).unwrap()
}

fn inputs(rng: &mut SimRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

#[test]
fn huber_head_matches_finite_differences() {
    let mut rng = SeedTree::new(11).rng("huber");
    for _ in 0..20 {
        let mut net = random_net(&mut rng, 4, 3, HeadKind::Linear);
        let mut batch = Batch::new(4, 3);
        for _ in 0..5 {
            let x = inputs(&mut rng, 4);
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            batch.push(&x, &y);
        }
        let err = finite_difference_error(&mut net, &batch, Loss::Huber { delta: 1.0 });
        assert!(err <= TOL, "relative error {err}");
    }
}

#[test]
fn cross_entropy_head_matches_finite_differences() {
    let mut rng = SeedTree::new(12).rng("ce");
    for _ in 0..20 {
        let mut net = random_net(&mut rng, 3, 5, HeadKind::Categorical);
        let mut batch = Batch::new(3, 5);
        for _ in 0..5 {
            let x = inputs(&mut rng, 3);
            let mut y = vec![0.0; 5];
            y[rng.random_range(0..5)] = 0.7;
            y[rng.random_range(0..5)] += 0.3;
            batch.push_weighted(&x, &y, rng.random_range(1.0..4.0));
        }
        let err = finite_difference_error(&mut net, &batch, Loss::CrossEntropy);
        assert!(err <= TOL, "relative error {err}");
    }
}

#[test]
fn gaussian_nll_head_matches_finite_differences() {
    let mut rng = SeedTree::new(13).rng("nll");
    for _ in 0..20 {
        let mut net = random_net(&mut rng, 3, 4, HeadKind::GaussianDiag);
        let mut batch = Batch::new(3, 2);
        for _ in 0..5 {
            let x = inputs(&mut rng, 3);
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            batch.push(&x, &y);
        }
        let err = finite_difference_error(&mut net, &batch, Loss::NllGaussian);
        assert!(err <= TOL, "relative error {err}");
    }
}

#[test]
fn masked_huber_matches_finite_differences() {
    let mut rng = SeedTree::new(14).rng("mask");
    let mut net = random_net(&mut rng, 4, 2, HeadKind::Linear);
    let mut batch = Batch::new(4, 2);
    for k in 0..6 {
        let x = inputs(&mut rng, 4);
        let mut mask = [0.0; 2];
        mask[k % 2] = 1.0;
        batch.push_masked(&x, &[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)], &mask);
    }
    let err = finite_difference_error(&mut net, &batch, Loss::Huber { delta: 1.0 });
    assert!(err <= TOL, "relative error {err}");
}
