use actin_edge::diagnostics::{check_bounds, dissipation_j, lyapunov_h, lyapunov_production};
use actin_edge::model::{
    inverse_transform, transform_state, BoundaryCondition, FieldState, Grid, ModelParams,
    ProfileSpec, SpeedProfile,
};
use actin_edge::simulator::{
    cfl_dt, characteristic_dt, step_characteristics, step_upwind,
};
use actin_edge::steady::{
    energy_e, energy_star, pbc_constant_steady, shooting_integral, turning_points, SteadyMethod,
    SteadyProfile,
};
use proptest::prelude::*;

fn bc_strategy() -> impl Strategy<Value = BoundaryCondition> {
    prop_oneof![Just(BoundaryCondition::Pbc), Just(BoundaryCondition::Dbc)]
}

fn cosine_profile() -> impl Strategy<Value = SpeedProfile> {
    (0.5..3.0_f64, 0.0..0.4_f64, 1..4_u32).prop_map(|(c0, rel, k)| {
        SpeedProfile::new(ProfileSpec::cosine(c0, rel * c0, k), 2048).unwrap()
    })
}

fn state(n: usize, bc: BoundaryCondition) -> impl Strategy<Value = FieldState> {
    (
        prop::collection::vec(0.0..6.0_f64, n),
        prop::collection::vec(0.0..6.0_f64, n),
    )
        .prop_map(move |(mut u, mut v)| {
            if bc == BoundaryCondition::Dbc {
                // no mass at the inflow cells
                u[0] = 0.0;
                v[n - 1] = 0.0;
            }
            FieldState::new(0.0, u, v)
        })
}

fn positive_profile(n: usize) -> impl Strategy<Value = SteadyProfile> {
    (
        prop::collection::vec(0.05..4.0_f64, n),
        prop::collection::vec(0.05..4.0_f64, n),
    )
        .prop_map(|(u, v)| {
            SteadyProfile::new(u, v, 3.0, BoundaryCondition::Pbc, SteadyMethod::Constant, 0.0)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dissipation_density_is_nonnegative(
        u in 0.0..50.0_f64, v in 0.0..50.0_f64,
        ub in 1e-3..20.0_f64, vb in 1e-3..20.0_f64,
    ) {
        let j = dissipation_j(u, v, ub, vb);
        let scale = 1.0 + (u / ub).powi(2) + (v / vb).powi(2);
        prop_assert!(j >= -1e-12 * scale * (1.0 + ub + vb).powi(3), "J = {j}");
    }

    #[test]
    fn dissipation_vanishes_only_at_the_reference(ub in 0.1..5.0_f64, vb in 0.1..5.0_f64) {
        prop_assert!(dissipation_j(ub, vb, ub, vb).abs() < 1e-12);
        prop_assert!(dissipation_j(1.1 * ub, vb, ub, vb) > 0.0);
    }

    #[test]
    fn lyapunov_is_nonnegative_and_decreasing(
        s in state(24, BoundaryCondition::Pbc),
        reference in positive_profile(24),
        profile in cosine_profile(),
    ) {
        let params = ModelParams::new(3.0, BoundaryCondition::Pbc).unwrap();
        prop_assert!(lyapunov_h(&s, &reference, &profile).unwrap() >= 0.0);
        prop_assert!(lyapunov_production(&s, &reference, &params, &profile).unwrap() <= 1e-12);
    }

    #[test]
    fn coordinate_map_is_increasing_and_invertible(profile in cosine_profile()) {
        let mut last = profile.x_to_big_x(0.0);
        prop_assert!(last.abs() < 1e-12);
        for k in 1..=200 {
            let x = k as f64 / 200.0;
            let big_x = profile.x_to_big_x(x);
            prop_assert!(big_x > last);
            prop_assert!((profile.big_x_to_x(big_x) - x).abs() < 1e-9);
            last = big_x;
        }
        prop_assert!((last - 1.0).abs() < 1e-10);
    }

    #[test]
    fn transform_roundtrip_preserves_smooth_states(
        profile in cosine_profile(), phase in 0.0..1.0_f64,
    ) {
        let grid = Grid::new(256).unwrap();
        let f = |x: f64| 1.5 + (2.0 * std::f64::consts::PI * (x + phase)).sin();
        let u: Vec<f64> = grid.centers().into_iter().map(f).collect();
        let v: Vec<f64> = u.iter().rev().cloned().collect();
        let s = FieldState::new(0.0, u, v);
        let back = inverse_transform(
            &transform_state(&s, &profile, BoundaryCondition::Pbc),
            &profile,
            BoundaryCondition::Pbc,
        );
        prop_assert!(back.sup_distance(&s) < 5e-3);
    }

    #[test]
    fn upwind_step_keeps_positivity_and_bounds(
        bc in bc_strategy(),
        alpha in 0.0..12.0_f64,
        cfl in 0.1..1.0_f64,
        seed_state in state(32, BoundaryCondition::Dbc),
        profile in cosine_profile(),
    ) {
        let params = ModelParams::new(alpha, bc).unwrap();
        let grid = Grid::new(32).unwrap();
        let dt = cfl_dt(&grid, &profile, cfl).unwrap();
        let mut s = seed_state.clone();
        for _ in 0..50 {
            s = step_upwind(&s, &params, &profile, dt).unwrap();
            prop_assert!(s.u.iter().chain(&s.v).all(|w| *w >= 0.0));
        }
        if bc == BoundaryCondition::Pbc {
            let report = check_bounds(&s, &seed_state, alpha, &profile);
            prop_assert!(report.ok, "{report:?}");
        }
    }

    #[test]
    fn characteristics_step_keeps_positivity(
        bc in bc_strategy(),
        alpha in 0.0..12.0_f64,
        seed_state in state(40, BoundaryCondition::Dbc),
        c in 0.5..2.0_f64,
    ) {
        let params = ModelParams::new(alpha, bc).unwrap();
        let profile = SpeedProfile::constant(c).unwrap();
        let dt = characteristic_dt(40, &profile);
        let mut s = transform_state(&seed_state, &profile, bc);
        for _ in 0..80 {
            s = step_characteristics(&s, &params, &profile, dt).unwrap();
            prop_assert!(s.big_u.iter().chain(&s.big_v).all(|w| *w >= 0.0 && w.is_finite()));
        }
    }

    #[test]
    fn zero_is_a_fixed_point(bc in bc_strategy(), alpha in 0.0..10.0_f64, profile in cosine_profile()) {
        let params = ModelParams::new(alpha, bc).unwrap();
        let grid = Grid::new(50).unwrap();
        let dt = cfl_dt(&grid, &profile, 0.9).unwrap();
        let s = step_upwind(&FieldState::zeros(&grid), &params, &profile, dt).unwrap();
        prop_assert_eq!(s.sup_norm(), 0.0);
    }

    #[test]
    fn constant_branch_is_stationary(alpha in 1.01..20.0_f64) {
        let grid = Grid::new(64).unwrap();
        let params = ModelParams::new(alpha, BoundaryCondition::Pbc).unwrap();
        let profile = SpeedProfile::constant(1.0).unwrap();
        let steady = pbc_constant_steady(alpha, &grid).unwrap();
        let s0 = FieldState::new(0.0, steady.u_bar.clone(), steady.v_bar.clone());
        let dt = cfl_dt(&grid, &profile, 0.9).unwrap();
        let s1 = step_upwind(&s0, &params, &profile, dt).unwrap();
        prop_assert!(s1.sup_distance(&s0) < 1e-12 * alpha);
        prop_assert!((steady.u_bar[0] - (alpha - 1.0) / 2.0).abs() < 1e-14 * alpha);
    }

    #[test]
    fn energy_increases_up_to_the_top_of_the_well(alpha in 1.05..15.0_f64) {
        let top = alpha - 1.0;
        let mut last = energy_e(0.0, alpha).unwrap();
        prop_assert_eq!(last, 0.0);
        for k in 1..=100 {
            let e = energy_e(top * k as f64 / 100.0, alpha).unwrap();
            prop_assert!(e > last);
            last = e;
        }
        prop_assert!((last - energy_star(alpha)).abs() < 1e-9 * energy_star(alpha).max(1.0));
    }

    #[test]
    fn turning_points_are_ordered(alpha in 1.1..10.0_f64, frac in 0.01..0.99_f64) {
        let e0 = frac * energy_star(alpha);
        let (p0, p1) = turning_points(e0, alpha).unwrap();
        prop_assert!(0.0 < p0 && p0 < p1 && p1 < alpha - 1.0 + 1e-12);
    }

    #[test]
    fn shooting_integral_grows_with_energy(alpha in 1.5..6.0_f64, frac in 0.05..0.9_f64) {
        let e0 = frac * energy_star(alpha);
        let lower = shooting_integral(e0, alpha, 1.0).unwrap();
        let upper = shooting_integral((frac + 0.05) * energy_star(alpha), alpha, 1.0).unwrap();
        prop_assert!(upper > lower);
    }
}
