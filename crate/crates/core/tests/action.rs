use std::f64::consts::PI;

use maglab::action::*;
use maglab::dynamics::*;
use maglab::geometry::*;
use proptest::prelude::*;

fn oscillating() -> MagneticSystem {
    MagneticSystem::oscillating(1.0, 0.05, BumpParams::default()).unwrap()
}

/// Smooth random-looking contractible loop from Fourier data.
fn fourier_loop(center: (f64, f64), radius: f64, modes: &[(f64, f64)], n: usize, period: f64) -> LoopPath {
    let pts = (0..n)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            let mut x = radius * t.cos();
            let mut y = radius * t.sin();
            for (m, (a, b)) in modes.iter().enumerate() {
                let f = (m + 2) as f64;
                x += radius * a * (f * t).cos();
                y += radius * b * (f * t).sin();
            }
            HPoint::raw(center.0 + x * center.1, center.1 * (1.0 + y))
        })
        .collect();
    LoopPath::new(pts, period).unwrap()
}

fn loop_strategy() -> impl Strategy<Value = LoopPath> {
    (
        -0.3..0.3f64,
        0.7..1.3f64,
        0.05..0.5f64,
        prop::collection::vec((-0.2..0.2f64, -0.2..0.2f64), 0..3),
        16usize..48,
        0.5..8.0f64,
    )
        .prop_map(|(cx, cy, r, modes, n, t)| fourier_loop((cx, cy), r, &modes, n, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn iteration_scales_action(l in loop_strategy(), n in 1usize..=5, k in 0.01..0.6f64) {
        let sys = oscillating();
        let c = ActionConvention::new();
        let s1 = action_value(&l, &sys, k, &c).unwrap();
        let sn = action_value(&iterate_loop(&l, n).unwrap(), &sys, k, &c).unwrap();
        prop_assert!((sn - n as f64 * s1).abs() <= 1e-9 * (1.0 + s1.abs()), "{} vs {}", sn, n as f64 * s1);
    }

    #[test]
    fn concatenation_is_additive(a in loop_strategy(), b in loop_strategy(), k in 0.01..0.6f64) {
        let sys = oscillating();
        let c = ActionConvention::new();
        // Move b so it starts where a does.
        let shift = a.points[0];
        let b = LoopPath::with_fractions(
            b.points.iter().map(|p| HPoint::raw(p.x - b.points[0].x + shift.x, p.y - b.points[0].y + shift.y)).collect(),
            b.period,
            b.fractions.clone(),
            LoopClass::Contractible,
        );
        prop_assume!(b.is_ok());
        let b = b.unwrap();
        let ab = concatenate(&a, &b).unwrap();
        let sa = action_value(&a, &sys, k, &c).unwrap();
        let sb = action_value(&b, &sys, k, &c).unwrap();
        let sab = action_value(&ab, &sys, k, &c).unwrap();
        prop_assert!((sab - sa - sb).abs() <= 1e-9 * (1.0 + sab.abs()));
    }

    #[test]
    fn gradient_is_exact(l in loop_strategy(), k in 0.01..0.6f64, idx in 0usize..16) {
        let sys = oscillating();
        let c = ActionConvention::new();
        let (_, g) = action_gradient(&l, &sys, k, &c).unwrap();
        let h = 1e-6;
        let i = idx % l.len();
        let scale = g.points.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max) + g.d_period.abs();
        for axis in 0..2 {
            let mut p = l.clone();
            let mut m = l.clone();
            if axis == 0 { p.points[i].x += h; m.points[i].x -= h; } else { p.points[i].y += h; m.points[i].y -= h; }
            let fd = (action_value(&p, &sys, k, &c).unwrap() - action_value(&m, &sys, k, &c).unwrap()) / (2.0 * h);
            prop_assert!((fd - g.points[i][axis]).abs() < 1e-5 * scale, "fd {} an {}", fd, g.points[i][axis]);
        }
    }

    #[test]
    fn slope_in_energy_is_period(l in loop_strategy(), k in 0.01..0.6f64) {
        let sys = oscillating();
        let c = ActionConvention::new();
        let d = action_value(&l, &sys, k + 0.1, &c).unwrap() - action_value(&l, &sys, k, &c).unwrap();
        prop_assert!((d - 0.1 * l.period).abs() < 1e-12 * (1.0 + l.period));
    }

    #[test]
    fn line_integral_matches_area_for_constant_field(l in loop_strategy(), s in 0.2..2.0f64) {
        let sys = MagneticSystem::constant(s, 0.1).unwrap();
        let r = action_sk(&l, &sys, 0.1, &ActionConvention::new()).unwrap();
        prop_assert!(r.flux_crosscheck.unwrap().abs() < 1e-8);
    }

    #[test]
    fn report_total_is_sum(l in loop_strategy(), k in 0.01..0.6f64) {
        let r = action_sk(&l, &oscillating(), k, &ActionConvention::new()).unwrap();
        prop_assert_eq!(r.total, r.kinetic + r.energy_term + r.flux);
        prop_assert_eq!(r.d_period, k - r.kinetic / r.period);
    }
}

#[test]
fn round_circle_action_and_tiny_loop() {
    let (s, k): (f64, f64) = (1.0, 0.2);
    let sys = MagneticSystem::constant(s, k).unwrap();
    let c = ActionConvention::new();
    let r: f64 = 0.6;
    let t = 2.0 * PI * r.sinh() / (2.0 * k).sqrt();
    for (orientation, sign) in [(1.0, 1.0), (-1.0, -1.0)] {
        let l = LoopPath::circle(HPoint::I, r, orientation, t, 2048).unwrap();
        let expected = (2.0 * k).sqrt() * 2.0 * PI * r.sinh() + sign * s * 2.0 * PI * (r.cosh() - 1.0);
        let got = action_value(&l, &sys, k, &c).unwrap();
        assert!((got - expected).abs() < 1e-5, "{got} {expected}");
    }
    let mut prev = f64::INFINITY;
    for eps in [1e-2, 1e-4, 1e-6] {
        let l = LoopPath::circle(HPoint::I, eps, 1.0, 3.0, 16).unwrap();
        let gap = (action_value(&l, &sys, k, &c).unwrap() - k * 3.0).abs();
        assert!(gap < prev);
        prev = gap;
    }
    assert!(prev < 1e-10);
}

#[test]
fn small_positive_disc_at_field_minimum_has_negative_action() {
    let sys = oscillating();
    let k: f64 = 0.01;
    let r: f64 = 0.5;
    let t = 2.0 * PI * r.sinh() / (2.0 * k).sqrt();
    let l = LoopPath::circle(sys.field_minimum_point(), r, 1.0, t, 256).unwrap();
    assert!(action_value(&l, &sys, k, &ActionConvention::new()).unwrap() < 0.0);
}

#[test]
fn concatenation_examples() {
    let sys = oscillating();
    let c = ActionConvention::new();
    let k = 0.1;
    let a = fourier_loop((0.1, 1.0), 0.3, &[(0.1, -0.05)], 40, 3.0);
    let point = LoopPath::constant(a.points[0], 1.7, 8).unwrap();
    let gap = action_value(&concatenate(&a, &point).unwrap(), &sys, k, &c).unwrap() - action_value(&a, &sys, k, &c).unwrap();
    assert!((gap - k * 1.7).abs() < 1e-12);
    let rev = a.reversed();
    let aa = concatenate(&a, &rev).unwrap();
    assert!(enclosed_flux(&aa, &sys).unwrap().abs() < 1e-12);
}

#[test]
fn unbounded_below_by_iteration() {
    let sys = oscillating();
    let c = ActionConvention::new();
    let k: f64 = 0.01;
    let r: f64 = 0.6;
    let l = LoopPath::circle(sys.field_minimum_point(), r, 1.0, 2.0 * PI * r.sinh() / (2.0 * k).sqrt(), 64).unwrap();
    let s1 = action_value(&l, &sys, k, &c).unwrap();
    assert!(s1 < 0.0);
    let s50 = action_value(&iterate_loop(&l, 50).unwrap(), &sys, k, &c).unwrap();
    assert!((s50 - 50.0 * s1).abs() < 1e-9 * (1.0 + s50.abs()));
}

/// Defect of a loop sampled from a closed orbit shrinks quadratically.
#[test]
fn sampled_orbit_is_nearly_critical() {
    let (s, k): (f64, f64) = (1.0, 0.2);
    let sys = MagneticSystem::constant(s, k).unwrap();
    let orbit = constant_field_circle(s, k).unwrap();
    let start = circle_state(HPoint::raw(0.1, 1.1), orbit.radius, orbit.orientation, k);
    let mut defects = Vec::new();
    let mut slopes = Vec::new();
    for n in [32usize, 64, 128] {
        let tr = integrate_sampled(start, &sys, orbit.period, orbit.period / (n as f64 * 64.0), 64).unwrap();
        let l = LoopPath::from_trajectory(&tr, 1).unwrap();
        assert_eq!(l.len(), n);
        let r = action_sk(&l, &sys, k, &ActionConvention::new()).unwrap();
        slopes.push(r.d_period.abs());
        defects.push(r.max_defect);
    }
    assert!(slopes[0] / slopes[1] > 3.5 && slopes[1] / slopes[2] > 3.5, "{slopes:?}");
    assert!(defects[0] / defects[1] > 3.5 && defects[1] / defects[2] > 3.5, "{defects:?}");
    assert!(defects[2] < 1e-3);
}

fn deck_reference(sys: &MagneticSystem, word: Word, q0: HPoint, n: usize) -> LoopPath {
    let g = sys.group().word_isometry(&word);
    let end = g.apply(q0);
    let pts = (0..n).map(|j| geodesic_lerp(q0, end, j as f64 / n as f64)).collect();
    LoopPath::with_class(pts, 4.0, LoopClass::Deck { word, deck: g }).unwrap()
}

fn deck_perturbed(reference: &LoopPath) -> LoopPath {
    let n = reference.len();
    let pts = reference
        .points
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let t = 2.0 * PI * j as f64 / n as f64;
            HPoint::raw(p.x + 0.15 * t.sin() * p.y, p.y * (1.0 + 0.2 * t.sin() + 0.1 * (2.0 * t).cos() - 0.1))
        })
        .collect();
    LoopPath::with_class(pts, 4.5, reference.class.clone()).unwrap()
}

#[test]
fn non_contractible_classes_need_a_reference() {
    let sys = oscillating();
    let x = deck_reference(&sys, Word(vec![0]), HPoint::raw(0.1, 0.8), 48);
    assert!(matches!(action_sk(&x, &sys, 0.05, &ActionConvention::new()), Err(ActionError::NoReference { .. })));
    let mut conv = ActionConvention::new();
    conv.register(&sys, &x).unwrap();
    let r = action_sk(&x, &sys, 0.05, &conv).unwrap();
    assert_eq!(r.flux, 0.0);
    let other = MagneticSystem::oscillating(1.5, 0.05, BumpParams::default()).unwrap();
    assert!(matches!(action_sk(&x, &other, 0.05, &conv), Err(ActionError::ConventionMismatch { .. })));
}

#[test]
fn non_contractible_flux_matches_cylinder() {
    let sys = oscillating();
    let x = deck_reference(&sys, Word(vec![0]), HPoint::raw(0.1, 0.8), 48);
    let mut conv = ActionConvention::new();
    conv.register(&sys, &x).unwrap();
    let y = deck_perturbed(&x);
    let ry = action_sk(&y, &sys, 0.05, &conv).unwrap();
    let mids = geodesic_homotopy(&x, &y, 16).unwrap();
    let cyl = flux_of_homotopy(&x, &y, &mids, &sys).unwrap();
    assert!((ry.flux - cyl).abs() < 1e-8, "{} {}", ry.flux, cyl);
    // Iterates use the iterated reference, so the constant b(ν, 2) vanishes.
    let s2 = action_value(&iterate_loop(&y, 2).unwrap(), &sys, 0.05, &conv).unwrap();
    assert!((s2 - 2.0 * ry.total).abs() < 1e-9 * (1.0 + ry.total.abs()));
    let s2ref = action_value(&iterate_loop(&x, 2).unwrap(), &sys, 0.05, &conv).unwrap();
    let kin = kinetic_energy(&iterate_loop(&x, 2).unwrap());
    assert!((s2ref - kin - 0.05 * 8.0).abs() < 1e-12);
}

#[test]
fn non_contractible_gradient_is_exact() {
    let sys = oscillating();
    let x = deck_reference(&sys, Word(vec![3]), HPoint::raw(-0.1, 1.1), 40);
    let mut conv = ActionConvention::new();
    conv.register(&sys, &x).unwrap();
    let y = deck_perturbed(&x);
    let (_, g) = action_gradient(&y, &sys, 0.05, &conv).unwrap();
    let h = 1e-6;
    for i in [0usize, 1, 20, 39] {
        for axis in 0..2 {
            let mut p = y.clone();
            let mut m = y.clone();
            if axis == 0 {
                p.points[i].x += h;
                m.points[i].x -= h;
            } else {
                p.points[i].y += h;
                m.points[i].y -= h;
            }
            let fd = (action_value(&p, &sys, 0.05, &conv).unwrap() - action_value(&m, &sys, 0.05, &conv).unwrap()) / (2.0 * h);
            assert!((fd - g.points[i][axis]).abs() < 1e-5 * (1.0 + fd.abs()), "i={i} {fd} {}", g.points[i][axis]);
        }
    }
}

#[test]
fn homotopy_flux_identities() {
    let sys = oscillating();
    let a = fourier_loop((0.0, 1.0), 0.2, &[(0.1, 0.1)], 64, 2.0);
    let b = fourier_loop((0.15, 0.9), 0.45, &[(-0.1, 0.05), (0.05, 0.0)], 64, 3.0);
    // Trivial homotopy.
    assert_eq!(flux_of_homotopy(&a, &a, &[], &sys).unwrap(), 0.0);
    // Forward then back.
    let fwd = geodesic_homotopy(&a, &b, 10).unwrap();
    let mut stages = fwd.clone();
    stages.push(b.clone());
    stages.extend(fwd.iter().rev().cloned());
    assert!(flux_of_homotopy(&a, &a, &stages, &sys).unwrap().abs() < 1e-10);
    // Two different homotopies with the same ends.
    let via = fourier_loop((-0.2, 1.1), 0.5, &[(0.15, -0.1)], 64, 2.5);
    let mut detour = geodesic_homotopy(&a, &via, 10).unwrap();
    detour.push(via.clone());
    detour.extend(geodesic_homotopy(&via, &b, 10).unwrap());
    let h1 = flux_of_homotopy(&a, &b, &fwd, &sys).unwrap();
    let h2 = flux_of_homotopy(&a, &b, &detour, &sys).unwrap();
    assert!((h1 - h2).abs() < 1e-8, "{h1} {h2}");
    // From a point loop, the cylinder flux is the disc flux.
    let point = LoopPath::constant(HPoint::raw(0.15, 0.95), 3.0, 64).unwrap();
    let mids = geodesic_homotopy(&point, &b, 12).unwrap();
    let cyl = flux_of_homotopy(&point, &b, &mids, &sys).unwrap();
    assert!((cyl - enclosed_flux(&b, &sys).unwrap()).abs() < 1e-8);
}

#[test]
fn tracked_copies_cover_the_declared_radius() {
    let g = octagon_group().unwrap();
    let tracked: Vec<HPoint> = g.ball(3).into_iter().map(|(_, h)| h.apply(HPoint::I)).collect();
    let nearest_untracked = g
        .ball(5)
        .into_iter()
        .map(|(_, h)| h.apply(HPoint::I))
        .filter(|p| tracked.iter().all(|q| hyperbolic_distance(*p, *q) > 1e-6))
        .map(|p| hyperbolic_distance(p, HPoint::I))
        .fold(f64::INFINITY, f64::min);
    assert!(nearest_untracked > TRACKED_COPY_RADIUS, "{nearest_untracked}");
}

#[test]
fn mane_estimates_for_constant_fields() {
    let sys = MagneticSystem::constant(1.0, 0.1).unwrap();
    let m = estimate_mane(&sys, ManeOptions::default()).unwrap();
    assert_eq!(m.analytic_upper, Some(0.5));
    assert!((0.48..=0.52).contains(&m.dynamical), "{m:?}");
    let zero = MagneticSystem::constant(0.0, 0.1).unwrap();
    let m0 = estimate_mane(&zero, ManeOptions::default()).unwrap();
    assert_eq!(m0.analytic_upper, Some(0.0));
    assert_eq!(m0.dynamical, 0.0);
    let cv = tau_plus_star(&sys, ManeOptions::default()).unwrap();
    assert_eq!(cv.tau_plus, 0.0);
    assert_eq!(cv.tau_plus_star, 0.0);
}

#[test]
fn nonnegative_bump_field_has_no_tau_plus() {
    let b = BumpParams { amplitude: 0.8, ..BumpParams::default() };
    let sys = MagneticSystem::oscillating(1.0, 0.1, b).unwrap();
    assert_eq!(estimate_tau_plus(&sys).value, 0.0);
    assert_eq!(tau_plus_star(&sys, ManeOptions::default()).unwrap().tau_plus_star, 0.0);
}

#[test]
fn oscillating_critical_values() {
    let sys = oscillating();
    let cv = tau_plus_star(&sys, ManeOptions::default()).unwrap();
    assert!(cv.tau_plus > 0.0);
    assert!(cv.mane_analytic.is_none());
    assert!(cv.mane_dynamical > 0.0);
    assert_eq!(cv.tau_plus_star, cv.tau_plus.min(cv.mane_dynamical));
}
