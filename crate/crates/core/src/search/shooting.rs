//! Cross-check of discrete criticality against the flow: multiple shooting
//! from loop points to a periodic orbit, then the distance from the loop to
//! that orbit. Critical loops of strongly unstable orbits do not close up
//! under plain re-integration, so the orbit is solved for instead.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::action::{ActionError, LoopPath};
use crate::dynamics::{integrate_sampled, FlowState, MagneticSystem, Trajectory};
use crate::geometry::{hyperbolic_distance, HPoint, Isometry};

use super::{CriticalPoint, SearchError};

const SHOOT_DT: f64 = 5e-3;
const SEGMENTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingReport {
    pub converged: bool,
    /// Matching mismatch of the loop's own initial data.
    pub initial_gap: f64,
    /// Matching mismatch after Newton.
    pub residual: f64,
    pub period: f64,
    /// Largest distance from a loop point to the periodic orbit.
    pub loop_distance: f64,
}

/// Unknowns: normal offset and direction of the first node, position and
/// direction of the other nodes, and the period.
struct Shooter<'a> {
    sys: &'a MagneticSystem,
    k: f64,
    base: HPoint,
    normal: [f64; 2],
    /// Fraction of the period spent on each segment.
    shares: Vec<f64>,
    deck_inv: Isometry,
}

fn wrap(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

impl Shooter<'_> {
    fn nodes(&self, u: &DVector<f64>) -> Vec<(HPoint, f64)> {
        let m = self.shares.len();
        let mut out = Vec::with_capacity(m);
        let b = self.base;
        out.push((HPoint::raw(b.x + u[0] * b.y * self.normal[0], b.y + u[0] * b.y * self.normal[1]), u[1]));
        for j in 1..m {
            out.push((HPoint::raw(u[3 * j - 1], u[3 * j]), u[3 * j + 1]));
        }
        out
    }

    fn period(&self, u: &DVector<f64>) -> f64 {
        u[u.len() - 1]
    }

    fn segments(&self, u: &DVector<f64>, stride: usize) -> Result<Vec<Trajectory>, SearchError> {
        let t = self.period(u);
        self.nodes(u)
            .iter()
            .zip(&self.shares)
            .map(|((q, a), share)| {
                if !(q.y > 0.0) || !(t > 0.0) {
                    return Err(SearchError::Invalid("shooting left the half-plane".into()));
                }
                Ok(integrate_sampled(FlowState::at_energy(*q, *a, self.k), self.sys, share * t, SHOOT_DT, stride)
                    .map_err(ActionError::from)?)
            })
            .collect()
    }

    fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>, SearchError> {
        let nodes = self.nodes(u);
        let m = nodes.len();
        let segs = self.segments(u, usize::MAX)?;
        let mut r = DVector::zeros(3 * m);
        for j in 0..m {
            let mut end = segs[j].final_state();
            if j + 1 == m {
                end = end.transformed(&self.deck_inv);
            }
            let (q, a) = nodes[(j + 1) % m];
            r[3 * j] = (end.q.x - q.x) / q.y;
            r[3 * j + 1] = (end.q.y - q.y) / q.y;
            r[3 * j + 2] = wrap(end.v.vy.atan2(end.v.vx) - a);
        }
        Ok(r)
    }
}

/// Distance to a finely sampled curve, refined on the chords next to the
/// nearest sample.
fn distance_to_polyline(p: HPoint, curve: &[HPoint]) -> f64 {
    let (best, d) = curve
        .iter()
        .enumerate()
        .map(|(i, q)| (i, hyperbolic_distance(p, *q)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY));
    let mut out = d;
    for (a, b) in [(best.saturating_sub(1), best), (best, (best + 1).min(curve.len().saturating_sub(1)))] {
        for s in 1..16 {
            let q = crate::action::geodesic_lerp(curve[a], curve[b], s as f64 / 16.0);
            out = out.min(hyperbolic_distance(p, q));
        }
    }
    out
}

fn direction(lp: &LoopPath, i: usize, k: f64) -> f64 {
    let v = lp.velocity_at(i, k).v;
    v.vy.atan2(v.vx)
}

/// Multiple shooting for a periodic orbit through the loop's nodes, in the
/// same free homotopy class.
pub fn shooting_check(cp: &CriticalPoint, sys: &MagneticSystem) -> Result<ShootingReport, SearchError> {
    let lp = &cp.loop_path;
    let sys = sys.with_energy(cp.k).map_err(ActionError::from)?;
    let n = lp.len();
    let m = SEGMENTS.min(n);
    let starts: Vec<usize> = (0..m).map(|j| j * n / m).collect();
    let shares: Vec<f64> = (0..m)
        .map(|j| {
            let end = if j + 1 == m { n } else { starts[j + 1] };
            lp.fractions[starts[j]..end].iter().sum()
        })
        .collect();
    let a0 = direction(lp, 0, cp.k);
    let shooter = Shooter {
        sys: &sys,
        k: cp.k,
        base: lp.points[0],
        normal: [-a0.sin(), a0.cos()],
        shares,
        deck_inv: lp.class.deck().inverse(),
    };
    let mut u = DVector::zeros(3 * m);
    u[1] = a0;
    for (j, &i) in starts.iter().enumerate().skip(1) {
        u[3 * j - 1] = lp.points[i].x;
        u[3 * j] = lp.points[i].y;
        u[3 * j + 1] = direction(lp, i, cp.k);
    }
    u[3 * m - 1] = lp.period;
    let mut f = shooter.residual(&u)?;
    let initial_gap = f.norm();
    for _ in 0..40 {
        if f.norm() < 1e-10 {
            break;
        }
        let mut jac = DMatrix::zeros(3 * m, 3 * m);
        for c in 0..3 * m {
            let e = 1e-7 * u[c].abs().max(1.0);
            let mut up = u.clone();
            let mut um = u.clone();
            up[c] += e;
            um[c] -= e;
            jac.set_column(c, &((shooter.residual(&up)? - shooter.residual(&um)?) / (2.0 * e)));
        }
        let Some(delta) = jac.lu().solve(&(-&f)) else { break };
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-4 {
            let cand = &u + t * &delta;
            if let Ok(fc) = shooter.residual(&cand) {
                if fc.norm() < f.norm() {
                    u = cand;
                    f = fc;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let orbit: Vec<HPoint> = shooter.segments(&u, 1)?.iter().flat_map(|s| s.samples.iter().map(|x| x.q)).collect();
    let loop_distance = lp.points.iter().map(|p| distance_to_polyline(*p, &orbit)).fold(0.0, f64::max);
    Ok(ShootingReport {
        converged: f.norm() < 1e-8,
        initial_gap,
        residual: f.norm(),
        period: shooter.period(&u),
        loop_distance,
    })
}
