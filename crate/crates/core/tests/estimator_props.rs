//! Properties of the confidence ellipsoids and the attribute posterior.

use fairalloc::environment::{posterior_mean_sign, NoiseModel};
use fairalloc::estimators::{AlphaLearnerState, EllipsoidState};
use proptest::collection::vec;
use proptest::prelude::*;

fn noise() -> impl Strategy<Value = NoiseModel> {
    prop_oneof![
        (0.2..3.0f64).prop_map(|sigma| NoiseModel::Gaussian { sigma }),
        (0.2..3.0f64).prop_map(|scale| NoiseModel::Laplace { scale }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn posterior_mean_is_a_monotone_sign(alpha in 0.01..0.99f64, n in noise(), x in -3.0..3.0f64, dx in 0.01..1.0f64) {
        let lo = posterior_mean_sign(alpha, &n, x).unwrap();
        let hi = posterior_mean_sign(alpha, &n, x + dx).unwrap();
        prop_assert!((-1.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo - 1e-12);
    }

    #[test]
    fn posterior_mean_matches_bayes_rule(alpha in 0.01..0.99f64, sigma in 0.2..3.0f64, x in -3.0..3.0f64) {
        let n = NoiseModel::Gaussian { sigma };
        // P(a = 1 | x) = 1 / (1 + (1 − α)/α · exp(−2x/σ²)).
        let p = 1.0 / (1.0 + (1.0 - alpha) / alpha * (-2.0 * x / (sigma * sigma)).exp());
        prop_assert!((posterior_mean_sign(alpha, &n, x).unwrap() - (2.0 * p - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_estimate_is_the_running_mean(obs in vec(-4.0..4.0f64, 1..50)) {
        let mut s = AlphaLearnerState::new(vec![NoiseModel::Gaussian { sigma: 1.0 }]);
        for &a in &obs {
            s.plugin_mean_a(0, a);
        }
        let mean = obs.iter().map(|a| 0.5 * (a + 1.0)).sum::<f64>() / obs.len() as f64;
        prop_assert!((s.alpha_hat - mean).abs() < 1e-12);
        prop_assert_eq!(s.count, obs.len() as u64);
    }

    #[test]
    fn optimistic_value_is_the_ellipsoid_maximum(
        steps in vec((0.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 0..30),
        c0 in -1.0..1.0f64, c1 in -1.0..1.0f64, beta in 0.1..10.0f64, angle in 0.0..6.3f64,
    ) {
        let mut e = EllipsoidState::new(&[2], 0.05, 1.0, 1.5).unwrap();
        for (x, a, b, u) in steps {
            e.linear_update(0, x, &[a, b], u).unwrap();
        }
        let c = [c0, c1];
        let top = e.optimistic_value(0, &c, beta).unwrap();
        let psi = e.optimistic_parameter(0, &c, beta).unwrap();
        prop_assert!(e.contains(0, &psi, beta * (1.0 + 1e-9)));
        prop_assert!((psi[0] * c0 + psi[1] * c1 - top).abs() < 1e-9);
        // A boundary point in another direction cannot do better.
        let s = &e.sources[0];
        let dir = nalgebra::DVector::from_vec(vec![angle.cos(), angle.sin()]);
        let vnorm = (dir.transpose() * &s.v * &dir)[(0, 0)].sqrt();
        let other = &s.psi_hat + dir * (beta.sqrt() / vnorm);
        prop_assert!(other[0] * c0 + other[1] * c1 <= top + 1e-9);
    }

    #[test]
    fn confidence_radius_grows_with_time(t in 0u64..100_000, dt in 1u64..1000) {
        let e = EllipsoidState::new(&[3, 1], 0.01, 1.0, 2.0).unwrap();
        prop_assert!(e.beta(t + dt) > e.beta(t));
    }
}

#[test]
fn invalid_confidence_levels_are_rejected() {
    assert!(EllipsoidState::new(&[1], 0.0, 1.0, 1.0).is_err());
    assert!(EllipsoidState::new(&[1], 1.0, 1.0, 1.0).is_err());
    assert!(EllipsoidState::new(&[0], 0.1, 1.0, 1.0).is_err());
}
