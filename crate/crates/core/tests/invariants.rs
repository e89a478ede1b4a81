use iongate::pulsekernel::quadrature::{self, Tolerance};
use iongate::pulsekernel::{segment_moment, triangle_moment};
use iongate::{Crystal, GateModel, GatePair, PulseSchedule, TARGET_PHASE, TAU0};
use proptest::prelude::*;

fn gate_case() -> impl Strategy<Value = (usize, usize, usize, f64, f64, Vec<f64>, f64)> {
    (2usize..9).prop_flat_map(|n| {
        (
            Just(n),
            0..n - 1,
            1..n,
            0.05f64..3.0,
            0.3f64..12.0,
            prop::collection::vec(-2.0f64..2.0, 1..8),
            prop::sample::select(vec![0.0, 1.0, 3.0]),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_fidelity_is_bounded((n, i, j, tau, mu, amps, nbar) in gate_case()) {
        prop_assume!(i < j);
        prop_assume!(amps.iter().any(|a| a.abs() > 1e-3));
        let crystal = Crystal::new(n).unwrap();
        let model = GateModel::new(crystal.modes, GatePair::new(i, j, n).unwrap(), nbar).unwrap();
        let schedule = PulseSchedule::new(tau * TAU0, mu, amps).unwrap();
        if let Ok(out) = model.evaluate(&schedule) {
            prop_assert!((out.phi_total.abs() - TARGET_PHASE).abs() < 1e-9);
            prop_assert!(out.fidelity >= 0.25 - 1e-12 && out.fidelity <= 1.0 + 1e-12);
            let per_mode: f64 = out.phi_per_mode.iter().sum();
            prop_assert!((per_mode - out.phi_total).abs() < 1e-9);
        }
    }

    #[test]
    fn moments_add_over_split_segments(mu in 0.1f64..12.0, omega in 0.5f64..20.0, a in 0.0f64..10.0, len in 0.01f64..10.0, frac in 0.05f64..0.95) {
        let b = a + frac * len;
        let c = a + len;
        let whole = segment_moment(mu, omega, a, c);
        let parts = segment_moment(mu, omega, a, b) + segment_moment(mu, omega, b, c);
        prop_assert!((whole - parts).norm() <= 1e-12 * (1.0 + whole.norm()) + 1e-12 * len);
    }

    #[test]
    fn closed_form_moments_match_quadrature(mu in 0.1f64..12.0, omega in 0.5f64..20.0, a in 0.0f64..10.0, len in 0.01f64..5.0) {
        let tol = Tolerance::default();
        let g = segment_moment(mu, omega, a, a + len);
        let gq = quadrature::segment_moment(mu, omega, a, a + len, tol);
        prop_assert!((g - gq).norm() <= 1e-8 * (1.0 + g.norm()));
        let t = triangle_moment(mu, omega, a, a + len);
        let tq = quadrature::triangle_moment(mu, omega, a, a + len, tol);
        prop_assert!((t - tq).abs() <= 1e-8 * (1.0 + t.abs()));
    }
}
