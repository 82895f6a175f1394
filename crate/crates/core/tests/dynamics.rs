use std::f64::consts::{FRAC_PI_2, PI};

use maglab::action::{estimate_mane, ManeOptions};
use maglab::dynamics::*;
use maglab::geometry::*;
use proptest::prelude::*;

/// Unit-speed geodesic from `p` in coordinate direction `angle`, at time `t`:
/// the vertical geodesic through `i`, rotated about `i` and moved to `p`.
fn analytic_geodesic(p: HPoint, angle: f64, t: f64) -> HPoint {
    let phi = 0.5 * (angle - FRAC_PI_2);
    let (s, c) = phi.sin_cos();
    let rot = Isometry::new(c, s, -s, c).unwrap();
    let q = rot.apply(HPoint::raw(0.0, t.exp()));
    HPoint::raw(p.x + p.y * q.x, p.y * q.y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn zero_field_flow_is_the_geodesic_flow(x in -1.0..1.0f64, y in 0.5..2.0f64, angle in 0.0..(2.0 * PI), t in 0.5..5.0f64) {
        let sys = MagneticSystem::constant(0.0, 0.5).unwrap();
        let p = HPoint::raw(x, y);
        let end = integrate_sampled(FlowState::at_energy(p, angle, 0.5), &sys, t, 1e-3, 1000).unwrap().final_state();
        prop_assert!(hyperbolic_distance(end.q, analytic_geodesic(p, angle, t)) < 1e-8);
    }

    #[test]
    fn flow_commutes_with_deck_transformations(x in -0.3..0.3f64, y in 0.7..1.3f64, angle in 0.0..(2.0 * PI), w in 0usize..65) {
        let sys = MagneticSystem::oscillating(1.0, 0.1, BumpParams::default()).unwrap();
        let (_, g) = sys.group().ball(2).swap_remove(w);
        let st = FlowState::at_energy(HPoint::raw(x, y), angle, 0.1);
        let moved_first = integrate_sampled(st.transformed(&g), &sys, 3.0, 1e-3, 1000).unwrap().final_state();
        let moved_after = integrate_sampled(st, &sys, 3.0, 1e-3, 1000).unwrap().final_state().transformed(&g);
        prop_assert!(hyperbolic_distance(moved_first.q, moved_after.q) < 1e-8);
    }

    #[test]
    fn constant_field_conserves_energy(x in -0.5..0.5f64, y in 0.6..1.5f64, angle in 0.0..(2.0 * PI), k in 0.05..0.45f64) {
        let sys = MagneticSystem::constant(1.0, k).unwrap();
        let tr = integrate_sampled(FlowState::at_energy(HPoint::raw(x, y), angle, k), &sys, 20.0, 1e-3, 1000).unwrap();
        prop_assert!(tr.energy_drift().abs() < 1e-8);
    }
}

#[test]
fn closure_transition_brackets_half_s_squared() {
    for s in [0.8, 1.0, 1.4] {
        let sys = MagneticSystem::constant(s, 0.1).unwrap();
        let opts = ManeOptions::default();
        let m = estimate_mane(&sys, opts).unwrap();
        assert!((m.dynamical - 0.5 * s * s).abs() <= opts.resolution, "s = {s}: {m:?}");
    }
}

#[test]
fn small_orbit_lengths_scale_like_root_k() {
    let sys = MagneticSystem::oscillating(1.0, 1e-3, BumpParams::default()).unwrap();
    let p0 = sys.field_minimum_point();
    let ratios: Vec<f64> = [1e-3, 2e-3, 4e-3]
        .iter()
        .map(|&k| small_orbit_period(p0, &sys, k).unwrap().length / (2.0 * k).sqrt())
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(hi / lo < 1.05, "{ratios:?}");
}

#[test]
fn liouville_action_is_nonnegative_for_small_orbits() {
    let sys = MagneticSystem::oscillating(1.0, 1e-3, BumpParams::default()).unwrap();
    for k in [1e-3, 5e-3] {
        assert!(small_orbit_liouville(&sys, k).unwrap().total >= 0.0);
    }
}
