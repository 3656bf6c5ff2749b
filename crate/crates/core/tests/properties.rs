use std::f64::consts::PI;

use nelson_core::correlators::{
    qm_oscillator_correlator, qm_pair_correlator, sm_gaussian_correlator, sm_measured_pair_correlator, sm_oscillator_correlator,
    sm_pair_correlator,
};
use nelson_core::dynamics::sample_initial;
use nelson_core::equilibrium::{osmotic_identity, velocity_identity_gap};
use nelson_core::wavefunction::ResidualTerms;
use nelson_core::{Physics, Point, VelocityKind, Wavefunction};
use proptest::prelude::*;

fn oscillator() -> Physics {
    Physics::oscillator(1.0, 1.0, 1.0).unwrap()
}

fn two_bumps(c1: f64, w1: f64, c2: f64, w2: f64) -> Wavefunction {
    let phys = oscillator();
    let a = Wavefunction::collapsed(phys, &Point::scalar(c1), w1, 0.0).unwrap().branches()[0].clone();
    let b = Wavefunction::collapsed(phys, &Point::scalar(c2), w2, 0.0).unwrap().branches()[0].clone();
    Wavefunction::from_branches(phys, 0.0, vec![a, b]).unwrap().normalized().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ground_width_gives_pure_decay(var in 0.05f64..3.0, omega in 0.2f64..4.0, t in 0.0f64..8.0) {
        let a = sm_gaussian_correlator(var, var, omega, t);
        let b = sm_oscillator_correlator(var, omega, t);
        prop_assert!((a - b).abs() <= 1e-12 * var);
    }

    #[test]
    fn any_width_decays_by_e_to_minus_n_pi_at_half_periods(s2 in 0.01f64..5.0, n in 0u32..5) {
        let t = n as f64 * PI;
        let c = sm_gaussian_correlator(s2, 0.5, 1.0, t);
        let expected = s2 * (-(n as f64) * PI).exp();
        prop_assert!((c - expected).abs() <= 1e-10 * s2, "{c} vs {expected}");
    }

    #[test]
    fn operator_correlators_are_periodic(c12 in -1.0f64..1.0, var in 0.1f64..2.0, t in 0.0f64..10.0, omega in 0.3f64..3.0) {
        let period = 2.0 * PI / omega;
        prop_assert!((qm_pair_correlator(c12, omega, t + period) - qm_pair_correlator(c12, omega, t)).abs() < 1e-9);
        let z = qm_oscillator_correlator(var, omega, t);
        prop_assert!((z.norm() - var).abs() < 1e-12);
        prop_assert!((z - qm_oscillator_correlator(var, omega, t + period)).norm() < 1e-9);
    }

    #[test]
    fn uncorrelated_pair_has_no_cross_correlation(var in 0.1f64..2.0, t in 0.0f64..6.0) {
        prop_assert!(sm_pair_correlator(var, 0.0, 0.5, 1.0, t).abs() < 1e-14);
    }

    #[test]
    fn measured_pair_starts_at_the_prior_covariance(var in 0.1f64..2.0, r in -0.99f64..0.99, w in 0.01f64..2.0) {
        let c = sm_measured_pair_correlator(var, r, w, 0.5, 1.0, 0.0);
        prop_assert!((c - r * var).abs() < 1e-10, "{c} vs {}", r * var);
    }

    #[test]
    fn propagation_preserves_norm_and_composes(x0 in -2.0f64..2.0, w in 0.05f64..1.5, t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
        let psi = Wavefunction::collapsed(oscillator(), &Point::scalar(x0), w, 0.0).unwrap();
        let direct = psi.at_time(t1 + t2).unwrap();
        let stepped = psi.at_time(t1).unwrap().at_time(t1 + t2).unwrap();
        prop_assert!((direct.norm() - 1.0).abs() < 1e-9);
        for x in [-1.0, 0.0, 0.7] {
            let p = Point::scalar(x);
            let (a, b) = (direct.density(&p), stepped.density(&p));
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn drift_splits_into_current_and_osmotic(c1 in -2.0f64..-0.5, c2 in 0.5f64..2.0, w1 in 0.3f64..1.0, w2 in 0.3f64..1.0, t in 0.0f64..2.0, seed in 0u64..1000) {
        let psi = two_bumps(c1, w1, c2, w2).at_time(t).unwrap();
        for x in sample_initial(&psi, 10, seed).unwrap() {
            prop_assert!(velocity_identity_gap(&psi, &x).unwrap() < 1e-12);
            prop_assert!(osmotic_identity(&psi, &x).unwrap()[0].abs() < 1e-12);
            let b = psi.drift_field(VelocityKind::ForwardDrift).eval(&x).unwrap()[0];
            let bs = psi.drift_field(VelocityKind::BackwardDrift).eval(&x).unwrap()[0];
            let v = psi.drift_field(VelocityKind::Current).eval(&x).unwrap()[0];
            prop_assert!((0.5 * (b + bs) - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn forward_plus_backward_equals_twice_continuity(x0 in -1.5f64..1.5, w in 0.2f64..1.0, t in 0.2f64..2.0, x in -2.0f64..2.0) {
        let psi = Wavefunction::collapsed(oscillator(), &Point::scalar(x0), w, 0.0).unwrap();
        let r = ResidualTerms::evaluate(&psi, &Point::scalar(x), t, 1e-4).unwrap();
        let scale = 1.0 + r.continuity.abs() + r.forward_fp.abs();
        prop_assert!((r.forward_fp + r.backward_fp - 2.0 * r.continuity).abs() <= 1e-10 * scale);
    }

    #[test]
    fn conditioning_one_coordinate_keeps_the_partner_drift_at_the_instant(r in -0.95f64..0.95, outcome in -1.0f64..1.0, w in 0.02f64..0.5, x2 in -1.0f64..1.0) {
        let phys = Physics::new(1.0, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        let psi = Wavefunction::correlated_gaussian(phys, &[[0.5, 0.5 * r], [0.5 * r, 0.5]]).unwrap();
        let cond = psi.condition_on(&[0], &Point::from_slice(&[outcome, 0.0]), w).unwrap();
        let x = Point::from_slice(&[outcome, x2]);
        let b = |s: &Wavefunction| s.drift_field(VelocityKind::ForwardDrift).eval(&x).unwrap()[1];
        prop_assert!((b(&psi) - b(&cond)).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_reproducible(seed in 0u64..10_000) {
        let psi = Wavefunction::ground_state(1.0, 1.0, 1.0).unwrap();
        prop_assert_eq!(sample_initial(&psi, 32, seed).unwrap(), sample_initial(&psi, 32, seed).unwrap());
    }
}
