//! Property-based invariants for the dynamics kernel and the integrator.

use proptest::prelude::*;

use qsched::analysis::q_integral;
use qsched::integrator::{integrate, IntegratorConfig};
use qsched::sir::{conserved_quantity, final_size, g, EpidemicParams, EpidemicState, Schedule};

fn arb_params() -> impl Strategy<Value = EpidemicParams> {
    (0.03f64..0.3, 0.5f64..4.0, 0.1f64..0.95).prop_map(|(gamma, r0n, ratio)| {
        EpidemicParams::from_r0(r0n, r0n * ratio, gamma).expect("ratio < 1 keeps rates ordered")
    })
}

/// Up to three disjoint intervals assembled from positive gaps and lengths.
fn arb_schedule() -> impl Strategy<Value = Schedule> {
    prop::collection::vec((0.1f64..40.0, 0.5f64..15.0), 0..=3).prop_map(|pieces| {
        let mut intervals = Vec::new();
        let mut cursor = 0.0;
        for (gap, len) in pieces {
            let start = cursor + gap;
            intervals.push((start, len));
            cursor = start + len;
        }
        Schedule::new(intervals).expect("positive gaps keep intervals disjoint")
    })
}

fn arb_state() -> impl Strategy<Value = EpidemicState> {
    (1e-6f64..0.999, 0.0f64..1.0).prop_map(|(s, i_frac)| {
        let i = i_frac * (1.0 - s);
        EpidemicState::new(0.0, s, i, 1.0 - s - i).expect("on the simplex by construction")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The conserved quantity and the phase potential agree identically:
    /// c(state) = i - g(s).
    #[test]
    fn conserved_quantity_matches_potential(state in arb_state(), rho in 0.05f64..3.0) {
        let c = conserved_quantity(&state, rho).unwrap();
        let via_g = state.i - g(state.s, rho).unwrap();
        prop_assert!((c - via_g).abs() <= 1e-12 * c.abs().max(1.0));
    }

    /// The stable final-size root: positive, at most rho_n, residual within
    /// tolerance, and r_inf complements it exactly.
    #[test]
    fn final_size_root_properties(params in arb_params(), state in arb_state()) {
        prop_assume!(state.i > 0.0);
        let fs = final_size(&state, &params).unwrap();
        prop_assert!(fs.s_inf > 0.0);
        prop_assert!(fs.s_inf <= params.rho_n() + 1e-12);
        prop_assert!(fs.s_inf <= state.s);
        prop_assert!(fs.residual.abs() <= 1e-12);
        prop_assert_eq!(fs.r_inf, 1.0 - fs.s_inf);
        prop_assert!(!fs.unstable_equilibrium);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Trajectory invariants under arbitrary schedules: points strictly
    /// ordered, on the simplex, susceptibles strictly decreasing, schedule
    /// boundaries hit exactly, and the reduced rate active exactly on the
    /// schedule.
    #[test]
    fn trajectory_invariants(
        params in arb_params(),
        schedule in arb_schedule(),
        i0 in 1e-5f64..0.2,
    ) {
        let config = IntegratorConfig { step: 0.05, ..IntegratorConfig::default() };
        let horizon = (schedule.end() + 20.0).clamp(30.0, 200.0);
        let initial = EpidemicState::initial(i0).unwrap();
        let traj = integrate(&params, &schedule, &initial, horizon, &config).unwrap();

        for w in traj.points().windows(2) {
            prop_assert!(w[1].t > w[0].t);
            prop_assert!(w[1].s < w[0].s);
            prop_assert!(w[1].simplex_residual() <= 1e-9);
        }
        for iv in schedule.intervals() {
            if iv.start < horizon {
                prop_assert!(traj.points().iter().any(|p| p.t == iv.start));
            }
            if iv.end() < horizon {
                prop_assert!(traj.points().iter().any(|p| p.t == iv.end()));
            }
        }
        for seg in traj.segment_betas() {
            let mid = 0.5 * (seg.t_start + seg.t_end);
            let quarantined = schedule
                .intervals()
                .iter()
                .any(|iv| iv.start <= mid && mid <= iv.end());
            let expected = if quarantined { params.beta_q() } else { params.beta_n() };
            prop_assert_eq!(seg.beta, expected);
        }
    }

    /// Per-segment conserved-quantity drift stays within the budget.
    #[test]
    fn conserved_quantity_drift_bounded(
        params in arb_params(),
        schedule in arb_schedule(),
        i0 in 1e-4f64..0.1,
    ) {
        let config = IntegratorConfig::default();
        let horizon = (schedule.end() + 10.0).clamp(20.0, 150.0);
        let initial = EpidemicState::initial(i0).unwrap();
        let traj = integrate(&params, &schedule, &initial, horizon, &config).unwrap();
        for seg in traj.segment_betas() {
            let rho = params.gamma() / seg.beta;
            let a = traj.state_at(seg.t_start).unwrap();
            let b = traj.state_at(seg.t_end).unwrap();
            let drift = (conserved_quantity(&b, rho).unwrap()
                - conserved_quantity(&a, rho).unwrap())
            .abs();
            prop_assert!(drift <= 1e-8 * (seg.t_end - seg.t_start).max(1.0));
        }
    }

    /// With subcritical normal transmission the window integral is positive
    /// for every admissible start state.
    #[test]
    fn q_positive_when_subcritical(
        gamma in 0.05f64..0.3,
        beta_scale in 0.3f64..1.0,
        ratio in 0.2f64..0.9,
        state in arb_state(),
        window in 1.0f64..40.0,
    ) {
        prop_assume!(state.i > 1e-9);
        let beta_n = gamma * beta_scale;
        let params = EpidemicParams::new(beta_n, beta_n * ratio, gamma).unwrap();
        let config = IntegratorConfig { step: 0.05, ..IntegratorConfig::default() };
        let q = q_integral(state.s, state.i, window, &params, &config).unwrap();
        prop_assert!(q.value > 0.0);
    }
}
