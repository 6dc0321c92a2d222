use max_core::divergence::{
    jrd_gaussians, jsd_categorical, rescale_variances, CategoricalDist, GaussianDiag,
    VarianceTempering,
};
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, k).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    })
}

fn ensemble_of_dists() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..8, 1usize..8).prop_flat_map(|(k, n)| prop::collection::vec(simplex(k), n))
}

fn gaussian(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-5.0f64..5.0, dim),
        prop::collection::vec(0.01f64..4.0, dim),
    )
}

fn gaussian_ensemble() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    (1usize..4, 1usize..8).prop_flat_map(|(d, n)| prop::collection::vec(gaussian(d), n))
}

fn dists(raw: &[Vec<f64>]) -> Vec<CategoricalDist> {
    raw.iter().map(|p| CategoricalDist::new(p.clone()).unwrap()).collect()
}

fn gaussians(raw: &[(Vec<f64>, Vec<f64>)]) -> Vec<GaussianDiag> {
    raw.iter().map(|(m, v)| GaussianDiag::new(m.clone(), v.clone()).unwrap()).collect()
}

proptest! {
    #[test]
    fn jsd_is_bounded_by_log_n(raw in ensemble_of_dists()) {
        let v = jsd_categorical(&dists(&raw)).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(v <= (raw.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn jsd_ignores_member_order(raw in ensemble_of_dists(), rot in 0usize..8) {
        let mut rotated = raw.clone();
        let k = rot % raw.len();
        rotated.rotate_left(k);
        let a = jsd_categorical(&dists(&raw)).unwrap();
        let b = jsd_categorical(&dists(&rotated)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn jsd_of_copies_is_zero(p in simplex(5), n in 1usize..8) {
        let v = jsd_categorical(&dists(&vec![p; n])).unwrap();
        prop_assert!(v.abs() < 1e-12);
    }

    #[test]
    fn jsd_of_distinct_pair_is_positive(p in simplex(4), q in simplex(4)) {
        prop_assume!(p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-6));
        prop_assert!(jsd_categorical(&dists(&[p, q])).unwrap() > 0.0);
    }

    #[test]
    fn jrd_is_bounded_above_by_log_n(raw in gaussian_ensemble()) {
        let v = jrd_gaussians(&gaussians(&raw)).unwrap();
        prop_assert!(v <= (raw.len() as f64).ln() + 1e-9);
    }

    #[test]
    fn jrd_ignores_member_order(raw in gaussian_ensemble(), rot in 0usize..8) {
        let mut rotated = raw.clone();
        rotated.rotate_left(rot % raw.len());
        let a = jrd_gaussians(&gaussians(&raw)).unwrap();
        let b = jrd_gaussians(&gaussians(&rotated)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn jrd_of_copies_is_zero(g in gaussian(3), n in 1usize..8) {
        let v = jrd_gaussians(&gaussians(&vec![g; n])).unwrap();
        prop_assert_eq!(v, 0.0);
    }

    #[test]
    fn jrd_with_equal_variances_is_nonnegative(
        means in prop::collection::vec(-5.0f64..5.0, 2..8),
        var in 0.01f64..4.0,
    ) {
        let raw: Vec<_> = means.iter().map(|&m| (vec![m], vec![var])).collect();
        prop_assert!(jrd_gaussians(&gaussians(&raw)).unwrap() >= 0.0);
    }

    #[test]
    fn full_tempering_keeps_variances(raw in gaussian_ensemble()) {
        let gs = gaussians(&raw);
        let dim = gs[0].dim();
        let t = VarianceTempering::new(1.0, vec![4.0; dim]).unwrap();
        let out = rescale_variances(&gs, &t).unwrap();
        prop_assert_eq!(&out, &gs);
        prop_assert_eq!(jrd_gaussians(&out).unwrap(), jrd_gaussians(&gs).unwrap());
    }

    #[test]
    fn zero_tempering_pins_variances_to_bound(raw in gaussian_ensemble()) {
        let gs = gaussians(&raw);
        let dim = gs[0].dim();
        let t = VarianceTempering::new(0.0, vec![4.0; dim]).unwrap();
        for g in rescale_variances(&gs, &t).unwrap() {
            prop_assert!(g.var().iter().all(|&v| v == 4.0));
        }
    }
}
