//! Geometric distinctness of closed orbits on the surface.

use crate::action::{geodesic_lerp, LoopPath};
use crate::geometry::{cosh_distance, FuchsianGenus2, HPoint, Isometry};

use super::{CriticalPoint, SearchError};

/// Surface Hausdorff distance above which two traces count as different.
pub const DISTINCTNESS_THRESHOLD: f64 = 0.05;

/// Densifies to edges of at most `spacing` and reduces into the octagon.
fn trace_points(lp: &LoopPath, group: &FuchsianGenus2, spacing: f64) -> Result<Vec<HPoint>, SearchError> {
    let mut out = Vec::new();
    for i in 0..lp.len() {
        let (a, b) = (lp.point(i), lp.point(i + 1));
        let pieces = (crate::geometry::hyperbolic_distance(a, b) / spacing).ceil().max(1.0) as usize;
        for j in 0..pieces {
            let p = geodesic_lerp(a, b, j as f64 / pieces as f64);
            out.push(group.reduce_to_domain(p).map_err(crate::action::ActionError::from)?.0);
        }
    }
    Ok(out)
}

fn one_sided(from: &[HPoint], to: &[HPoint], translates: &[Isometry]) -> f64 {
    let lifted: Vec<HPoint> = translates.iter().flat_map(|g| to.iter().map(move |q| g.apply(*q))).collect();
    from.iter()
        .map(|p| lifted.iter().map(|q| cosh_distance(*p, *q)).fold(f64::INFINITY, f64::min))
        .fold(1.0f64, f64::max)
        .acosh()
}

/// Hausdorff distance between the traces of two loops on the surface.
/// Both traces live in the closed octagon; nearest lifts come from the
/// tiles sharing an edge or a vertex with it.
pub fn surface_hausdorff(a: &LoopPath, b: &LoopPath, group: &FuchsianGenus2) -> Result<f64, SearchError> {
    let spacing = DISTINCTNESS_THRESHOLD / 4.0;
    let pa = trace_points(a, group, spacing)?;
    let pb = trace_points(b, group, spacing)?;
    let tiles = neighbor_tiles(group);
    Ok(one_sided(&pa, &pb, &tiles).max(one_sided(&pb, &pa, &tiles)))
}

/// Identity plus every deck image of the octagon touching it. Tile centres
/// of touching tiles lie within twice the circumradius.
fn neighbor_tiles(group: &FuchsianGenus2) -> Vec<Isometry> {
    let cot = 1.0 / (std::f64::consts::PI / 8.0).tan();
    let reach = 2.0 * (cot * cot).acosh() + 1e-6;
    group
        .ball(4)
        .into_iter()
        .map(|(_, g)| g)
        .filter(|g| crate::geometry::hyperbolic_distance(HPoint::I, g.apply(HPoint::I)) <= reach)
        .collect()
}

/// Whether the two periods are in ratio `p/q` with small `p, q`.
fn commensurable(t1: f64, t2: f64) -> bool {
    let r = t1 / t2;
    (1..=12).any(|q| {
        let p = (r * q as f64).round();
        p >= 1.0 && (r * q as f64 - p).abs() <= 1e-4 * p
    })
}

/// True unless the two orbits share their trace on the surface and have
/// commensurable periods, which covers time shifts, reversal and iteration.
pub fn distinctness(a: &CriticalPoint, b: &CriticalPoint, group: &FuchsianGenus2) -> Result<bool, SearchError> {
    if !commensurable(a.loop_path.period, b.loop_path.period) {
        return Ok(true);
    }
    Ok(surface_hausdorff(&a.loop_path, &b.loop_path, group)? > DISTINCTNESS_THRESHOLD)
}
