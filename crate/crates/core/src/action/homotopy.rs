//! Flux of σ through the cylinder swept by a homotopy of loops.

use crate::dynamics::MagneticSystem;
use crate::geometry::{hyperbolic_distance, HPoint};
use crate::quadrature::ruled_flux;

use super::loops::{geodesic_lerp, LoopPath};
use super::ActionError;

/// Largest pointwise hyperbolic distance allowed between consecutive
/// stages of a homotopy.
pub const HOMOTOPY_MESH: f64 = 0.25;

/// `∫σ` over the cylinder swept from `start` through `intermediates` to
/// `end`, oriented so that for contractible loops it equals the change of
/// enclosed flux. Each panel is a ruled patch between corresponding edges;
/// the closing edge of a deck-closed class uses the deck image of the first
/// side, so the two sides glue exactly on the surface.
pub fn flux_of_homotopy(
    start: &LoopPath,
    end: &LoopPath,
    intermediates: &[LoopPath],
    sys: &MagneticSystem,
) -> Result<f64, ActionError> {
    let stages: Vec<&LoopPath> = std::iter::once(start).chain(intermediates).chain(std::iter::once(end)).collect();
    let n = start.len();
    for s in &stages {
        if s.len() != n || s.class != start.class {
            return Err(ActionError::HomotopyShape);
        }
    }
    let mut total = 0.0;
    for pair in stages.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let gap = (0..n).map(|i| hyperbolic_distance(a.points[i], b.points[i])).fold(0.0, f64::max);
        if gap > HOMOTOPY_MESH {
            return Err(ActionError::MeshTooCoarse { gap, bound: HOMOTOPY_MESH });
        }
        total += stage_flux(a, b, sys);
    }
    Ok(total)
}

fn straight(p: HPoint, q: HPoint) -> impl Fn(f64) -> (HPoint, [f64; 2]) {
    move |v| (HPoint::raw(p.x + v * (q.x - p.x), p.y + v * (q.y - p.y)), [q.x - p.x, q.y - p.y])
}

fn stage_flux(a: &LoopPath, b: &LoopPath, sys: &MagneticSystem) -> f64 {
    let n = a.len();
    let density = |p: HPoint| sys.density(p);
    let mut acc = 0.0;
    for i in 0..n {
        let side0 = straight(a.points[i], b.points[i]);
        acc -= if i + 1 < n || a.class.is_contractible() {
            ruled_flux(&side0, &straight(a.point(i + 1), b.point(i + 1)), &density)
        } else {
            let g = a.class.deck();
            let (p, q) = (a.points[0], b.points[0]);
            let side1 = move |v: f64| {
                let z = HPoint::raw(p.x + v * (q.x - p.x), p.y + v * (q.y - p.y));
                let d = g.derivative(z) * num_complex::Complex64::new(q.x - p.x, q.y - p.y);
                (g.apply(z), [d.re, d.im])
            };
            ruled_flux(&side0, &side1, &density)
        };
    }
    acc
}

/// Intermediate stages of the pointwise geodesic homotopy from `a` to `b`,
/// with enough steps to respect [`HOMOTOPY_MESH`].
pub fn geodesic_homotopy(a: &LoopPath, b: &LoopPath, min_steps: usize) -> Result<Vec<LoopPath>, ActionError> {
    if a.len() != b.len() || a.class != b.class {
        return Err(ActionError::HomotopyShape);
    }
    let gap = (0..a.len()).map(|i| hyperbolic_distance(a.points[i], b.points[i])).fold(0.0, f64::max);
    let steps = min_steps.max((gap / (0.5 * HOMOTOPY_MESH)).ceil() as usize).max(1);
    (1..steps)
        .map(|j| {
            let t = j as f64 / steps as f64;
            let pts = a.points.iter().zip(&b.points).map(|(p, q)| geodesic_lerp(*p, *q, t)).collect();
            LoopPath::with_fractions(pts, a.period + t * (b.period - a.period), a.fractions.clone(), a.class.clone())
        })
        .collect()
}
