//! The Taimanov functional and estimators for the energy thresholds
//! `c(g, σ)`, `τ₊` and `τ₊* = min(τ₊, c)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{circle_state, closure_check_with, octagon_inradius, ClosureOptions, FieldKind, MagneticSystem};
use crate::geometry::{hyperbolic_distance, segment_length, HPoint};
use crate::quadrature::fan_flux;

use super::loops::LoopPath;
use super::ActionError;

/// An embedded region of the surface described by its boundary polygons.
#[derive(Debug, Clone)]
pub enum Region {
    Empty,
    WholeSurface,
    Disc { boundary: LoopPath },
    Annulus { outer: LoopPath, inner: LoopPath },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaimanovValue {
    pub k: f64,
    pub boundary_length: f64,
    pub flux: f64,
    pub value: f64,
}

/// `𝒯_k(Σ) = √(2k)·ℓ(∂Σ) + ∫_Σ σ`, with the flux by area quadrature.
/// Boundaries are oriented counterclockwise internally, so the caller's
/// orientation is irrelevant.
pub fn taimanov_tk(region: &Region, sys: &MagneticSystem, k: f64) -> Result<TaimanovValue, ActionError> {
    if !(k > 0.0) {
        return Err(ActionError::Invalid(format!("energy must be positive, got {k}")));
    }
    let (length, flux) = match region {
        Region::Empty => (0.0, 0.0),
        Region::WholeSurface => (0.0, sys.total_flux()),
        Region::Disc { boundary } => {
            let b = polygon_in_domain(boundary, sys)?;
            check_simple(&b)?;
            (polygon_length(&b), oriented_flux(&b, sys))
        }
        Region::Annulus { outer, inner } => {
            let (o, i) = (polygon_in_domain(outer, sys)?, polygon_in_domain(inner, sys)?);
            check_simple(&o)?;
            check_simple(&i)?;
            if polygons_cross(&o, &i) || !i.iter().all(|p| point_in_polygon(*p, &o)) {
                return Err(ActionError::SelfIntersecting);
            }
            (polygon_length(&o) + polygon_length(&i), oriented_flux(&o, sys) - oriented_flux(&i, sys))
        }
    };
    let value = (2.0 * k).sqrt() * length + flux;
    Ok(TaimanovValue { k, boundary_length: length, flux, value })
}

fn polygon_in_domain(l: &LoopPath, sys: &MagneticSystem) -> Result<Vec<HPoint>, ActionError> {
    if !l.class.is_contractible() {
        return Err(ActionError::NotContractible);
    }
    if let Some(p) = l.points.iter().find(|p| !sys.group().contains(**p)) {
        return Err(ActionError::Invalid(format!("boundary point ({}, {}) lies outside the fundamental domain", p.x, p.y)));
    }
    Ok(l.points.clone())
}

fn polygon_length(p: &[HPoint]) -> f64 {
    (0..p.len()).map(|i| segment_length(p[i], p[(i + 1) % p.len()])).sum()
}

fn shoelace(p: &[HPoint]) -> f64 {
    (0..p.len()).map(|i| {
        let (a, b) = (p[i], p[(i + 1) % p.len()]);
        a.x * b.y - b.x * a.y
    }).sum::<f64>() / 2.0
}

/// Flux through the polygon's interior, whatever its traversal direction.
fn oriented_flux(p: &[HPoint], sys: &MagneticSystem) -> f64 {
    let n = p.len() as f64;
    let apex = HPoint::raw(p.iter().map(|q| q.x).sum::<f64>() / n, p.iter().map(|q| q.y).sum::<f64>() / n);
    let f = fan_flux(apex, p, &|q| sys.density(q));
    if shoelace(p) < 0.0 { -f } else { f }
}

fn orient(a: HPoint, b: HPoint, c: HPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(a: HPoint, b: HPoint, c: HPoint, d: HPoint) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

fn check_simple(p: &[HPoint]) -> Result<(), ActionError> {
    let n = p.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]) {
                return Err(ActionError::SelfIntersecting);
            }
        }
    }
    Ok(())
}

fn polygons_cross(a: &[HPoint], b: &[HPoint]) -> bool {
    let (n, m) = (a.len(), b.len());
    (0..n).any(|i| (0..m).any(|j| segments_cross(a[i], a[(i + 1) % n], b[j], b[(j + 1) % m])))
}

fn point_in_polygon(p: HPoint, poly: &[HPoint]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    inside
}

/// Radii of the disc family used for `τ₊`.
const DISC_FAMILY_SIZE: usize = 800;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPlusEstimate {
    pub value: f64,
    /// Disc radius attaining the threshold.
    pub radius: f64,
    pub center: HPoint,
}

/// Largest radius of a disc about `p` that embeds inside the fundamental
/// domain.
fn embedded_radius(p: HPoint) -> f64 {
    octagon_inradius() - hyperbolic_distance(p, HPoint::I)
}

/// `𝒯_k` of the round disc of radius `r` about the field minimum point,
/// from the radial closed forms.
pub fn disc_family_tk(sys: &MagneticSystem, k: f64, r: f64) -> f64 {
    (2.0 * k).sqrt() * 2.0 * PI * r.sinh() + sys.disc_flux(r)
}

/// Negativity threshold of the Taimanov functional over round discs about
/// the field minimum: a lower bound for `τ₊` on the base surface.
pub fn estimate_tau_plus(sys: &MagneticSystem) -> TauPlusEstimate {
    let center = sys.field_minimum_point();
    let none = TauPlusEstimate { value: 0.0, radius: 0.0, center };
    if sys.density_range().0 >= 0.0 {
        return none;
    }
    let r_max = embedded_radius(center);
    let radii: Vec<f64> = (1..=DISC_FAMILY_SIZE).map(|j| r_max * j as f64 / DISC_FAMILY_SIZE as f64).collect();
    let min_tk = |k: f64| radii.iter().map(|r| (disc_family_tk(sys, k, *r), *r)).fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let (lo_f, hi_f) = sys.density_range();
    let mut lo = 0.0;
    let mut hi = 0.5 * lo_f.abs().max(hi_f.abs()).powi(2) + 1.0;
    if min_tk(f64::MIN_POSITIVE).0 >= 0.0 {
        return none;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if min_tk(mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    TauPlusEstimate { value: lo, radius: min_tk(lo).1, center }
}

/// `(r, 𝒯_k(disc of radius r))` over the disc family, for scan output.
pub fn tau_plus_trace(sys: &MagneticSystem, k: f64, samples: usize) -> Vec<(f64, f64)> {
    let r_max = embedded_radius(sys.field_minimum_point());
    (1..=samples).map(|j| {
        let r = r_max * j as f64 / samples as f64;
        (r, disc_family_tk(sys, k, r))
    }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeOptions {
    /// Grid spacing of the closure scan.
    pub resolution: f64,
    /// Bisection steps inside the bracketing grid cell.
    pub refinements: usize,
    pub dt: f64,
}

impl Default for ManeOptions {
    fn default() -> Self {
        Self { resolution: 0.02, refinements: 2, dt: 2e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeEstimate {
    /// `sup ½‖θ‖²` for the bounded primitive `s·dx/y`; constant fields only.
    pub analytic_upper: Option<f64>,
    /// Midpoint of the final closed/open bracket of the probe family.
    pub dynamical: f64,
    pub bracket: (f64, f64),
    /// `(k, closed)` for every probe run, in increasing `k`.
    pub trace: Vec<(f64, bool)>,
}

/// Whether the probe orbit at energy `k` closes: the round orbit of the
/// constant background field centered at the field minimum point.
fn probe_closes(sys: &MagneticSystem, k: f64, dt: f64) -> Result<bool, ActionError> {
    let s = sys.strength * sys.convention.sign();
    let speed = (2.0 * k).sqrt();
    if speed >= s.abs() {
        return Ok(false);
    }
    let r = (speed / s.abs()).atanh();
    let period = 2.0 * PI * r.sinh() / speed;
    let start = circle_state(sys.field_minimum_point(), r, -s.signum(), k);
    let sys_k = sys.with_energy(k)?;
    let opts = ClosureOptions { dt, ..Default::default() };
    Ok(closure_check_with(start, &sys_k, 2.0 * period + 5.0, opts)?.is_some())
}

/// Estimates of the Mañé critical value: the analytic bound from the
/// bounded primitive when the field is constant, and the closed/open
/// transition of a probe family of orbits.
pub fn estimate_mane(sys: &MagneticSystem, opts: ManeOptions) -> Result<ManeEstimate, ActionError> {
    let s = sys.strength * sys.convention.sign();
    let analytic_upper = matches!(sys.field, FieldKind::Constant).then(|| 0.5 * s * s);
    if s == 0.0 {
        return Ok(ManeEstimate { analytic_upper, dynamical: 0.0, bracket: (0.0, 0.0), trace: Vec::new() });
    }
    let k_max = 0.5 * s * s;
    let grid: Vec<f64> = (1..).map(|j| j as f64 * opts.resolution).take_while(|k| *k <= k_max + opts.resolution).collect();
    let results: Vec<Result<bool, ActionError>> = grid.par_iter().map(|k| probe_closes(sys, *k, opts.dt)).collect();
    let mut trace = Vec::with_capacity(grid.len());
    for (k, r) in grid.iter().zip(results) {
        trace.push((*k, r?));
    }
    let Some(last) = trace.iter().rposition(|(_, c)| *c) else {
        return Ok(ManeEstimate { analytic_upper, dynamical: 0.0, bracket: (0.0, opts.resolution), trace });
    };
    let mut lo = trace[last].0;
    let mut hi = lo + opts.resolution;
    for _ in 0..opts.refinements {
        let mid = 0.5 * (lo + hi);
        let closed = probe_closes(sys, mid, opts.dt)?;
        trace.push((mid, closed));
        if closed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ManeEstimate { analytic_upper, dynamical: 0.5 * (lo + hi), bracket: (lo, hi), trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    pub mane_analytic: Option<f64>,
    pub mane_dynamical: f64,
    pub tau_plus: f64,
    pub tau_plus_star: f64,
}

/// `τ₊* = min(τ₊, c)` with both operands.
pub fn tau_plus_star(sys: &MagneticSystem, opts: ManeOptions) -> Result<CriticalValues, ActionError> {
    let tau = estimate_tau_plus(sys);
    // The dynamical estimate is irrelevant when τ₊ vanishes.
    let mane = if tau.value == 0.0 && !matches!(sys.field, FieldKind::Constant) {
        ManeEstimate { analytic_upper: None, dynamical: f64::NAN, bracket: (f64::NAN, f64::NAN), trace: Vec::new() }
    } else {
        estimate_mane(sys, opts)?
    };
    Ok(CriticalValues::combine(&tau, &mane))
}

impl CriticalValues {
    /// Assembles the four values; `τ₊* = 0` whenever `τ₊ = 0`.
    pub fn combine(tau: &TauPlusEstimate, mane: &ManeEstimate) -> Self {
        let star = if tau.value == 0.0 { 0.0 } else { tau.value.min(mane.dynamical) };
        CriticalValues {
            mane_analytic: mane.analytic_upper,
            mane_dynamical: mane.dynamical,
            tau_plus: tau.value,
            tau_plus_star: star,
        }
    }
}
