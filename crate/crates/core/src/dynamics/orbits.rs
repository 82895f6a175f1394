//! Small closed orbits around the field minimum and the Liouville-action
//! sign diagnostic.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{hyperbolic_distance, HPoint};
use crate::quadrature::fan_flux;

use super::flow::{closure_check_with, integrate, ClosureOptions, FlowState, Trajectory};
use super::{DynamicsError, MagneticSystem};

/// Geometry of a round magnetic circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleOrbit {
    pub radius: f64,
    pub period: f64,
    /// `+1` counterclockwise, `−1` clockwise.
    pub orientation: f64,
}

/// Closed circle orbit for a constant field: geodesic curvature
/// `|s|/√(2k)` must exceed 1.
pub fn constant_field_circle(s: f64, k: f64) -> Option<CircleOrbit> {
    let speed = (2.0 * k).sqrt();
    let kappa = s.abs() / speed;
    (kappa > 1.0).then(|| {
        let radius = (1.0 / kappa).atanh();
        CircleOrbit { radius, period: 2.0 * PI * radius.sinh() / speed, orientation: -s.signum() }
    })
}

/// State on the circle of hyperbolic radius `r` about `center`, moving with
/// the given orientation at energy `k`.
pub fn circle_state(center: HPoint, r: f64, orientation: f64, k: f64) -> FlowState {
    // Disk chart at the center: ζ = (z − c)/(z − c̄); the point ζ = tanh(r/2)
    // moves with ζ̇ ∝ iζ for counterclockwise motion.
    let c = center.to_complex();
    let zeta = Complex64::new((r / 2.0).tanh(), 0.0);
    let z = (c - c.conj() * zeta) / (Complex64::new(1.0, 0.0) - zeta);
    let dzeta_dz = (c - c.conj()) / ((z - c.conj()) * (z - c.conj()));
    let dir = Complex64::i() * zeta * orientation / dzeta_dz;
    let q = HPoint::from_complex(z);
    let scale = (2.0 * k).sqrt() * q.y / dir.norm();
    FlowState::new(q, dir.re * scale, dir.im * scale)
}

/// Radius of the smallest round orbit about the field minimum point:
/// the first root of `√(2k)·coth r = |f(r)|`.
pub fn small_circle_radius(sys: &MagneticSystem, k: f64) -> Result<f64, DynamicsError> {
    let speed = (2.0 * k).sqrt();
    let f0 = sys.radial_density(0.0);
    if f0 == 0.0 {
        return Err(DynamicsError::NoSmallOrbit { k });
    }
    let g = |r: f64| speed / r.tanh() - (sys.radial_density(r) * f0.signum()).max(0.0);
    // Scan outward from the leading-order guess until g changes sign.
    let mut lo = 1e-3 * speed / f0.abs();
    if g(lo) <= 0.0 {
        return Err(DynamicsError::NoSmallOrbit { k });
    }
    let mut hi = lo;
    let step = 0.05 * speed / f0.abs();
    loop {
        hi += step.max(1e-6);
        if g(hi) < 0.0 {
            break;
        }
        if hi > 5.0 {
            return Err(DynamicsError::NoSmallOrbit { k });
        }
        lo = hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallOrbitReport {
    pub k: f64,
    pub measured_period: f64,
    /// Leading term `2π/|f(p₀)|`.
    pub predicted: f64,
    pub radius: f64,
    /// Length `√(2k)·period`.
    pub length: f64,
}

impl SmallOrbitReport {
    pub fn relative_discrepancy(&self) -> f64 {
        ((self.measured_period - self.predicted) / self.predicted).abs()
    }
}

/// Measures the prime period of the small round orbit about `p0` (which
/// must be the field minimum point of a radial field, or any point of a
/// constant field) by integrating the flow until it closes.
pub fn small_orbit_period(p0: HPoint, sys: &MagneticSystem, k: f64) -> Result<SmallOrbitReport, DynamicsError> {
    let f0 = sys.density(p0);
    if f0 == 0.0 {
        return Err(DynamicsError::NoSmallOrbit { k });
    }
    let sys_k = sys.with_energy(k)?;
    let center = if sys.bump().is_some() { sys.field_minimum_point() } else { p0 };
    if hyperbolic_distance(center, p0) > 1e-12 {
        return Err(DynamicsError::InvalidParameter { name: "p0", value: p0.x });
    }
    let r = small_circle_radius(&sys_k, k)?;
    let start = circle_state(center, r, -f0.signum(), k);
    let predicted = 2.0 * PI / f0.abs();
    let opts = ClosureOptions { dt: (predicted * 1e-4).min(1e-3), ..Default::default() };
    let closure = closure_check_with(start, &sys_k, 3.0 * predicted, opts)?.ok_or(DynamicsError::NoSmallOrbit { k })?;
    Ok(SmallOrbitReport {
        k,
        measured_period: closure.period,
        predicted,
        radius: r,
        length: (2.0 * k).sqrt() * closure.period,
    })
}

/// Integrates exactly one period of a closed orbit.
pub fn closed_orbit(start: FlowState, sys: &MagneticSystem, period: f64, dt: f64) -> Result<Trajectory, DynamicsError> {
    integrate(start, sys, period, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleReport {
    pub period: f64,
    pub a_sigma: f64,
    /// `2k·T`.
    pub energy_term: f64,
    /// `∮β`, equal to the flux of `(f + a_σ)μ` through a capping disc.
    pub beta_circulation: f64,
    /// `a_σ·∫f dt`.
    pub field_term: f64,
    /// Sum of the three terms: the action of the orbit's invariant measure
    /// scaled by the period.
    pub total: f64,
    /// `total / period`, the action of the normalized measure.
    pub normalized: f64,
}

/// Action of the invariant measure carried by a closed contractible orbit,
/// `∫[2k + β(v) + a_σ f] dt`, with `σ = −a_σ μ + dβ`.
pub fn liouville_action(orbit: &Trajectory, sys: &MagneticSystem) -> Result<LiouvilleReport, DynamicsError> {
    let first = orbit.samples.first().ok_or(DynamicsError::OpenOrbit { gap: f64::INFINITY })?;
    let last = orbit.final_state();
    let gap = hyperbolic_distance(first.q, last.q);
    if gap > 1e-6 || orbit.samples.len() < 4 {
        return Err(DynamicsError::OpenOrbit { gap });
    }
    let k = first.energy();
    let period = orbit.total_time();
    let a_sigma = sys.a_sigma();
    // Trapezoid rule; spectrally accurate for periodic integrands.
    let mut field_integral = 0.0;
    for (w, s) in orbit.times.windows(2).zip(orbit.samples.windows(2)) {
        field_integral += 0.5 * (w[1] - w[0]) * (sys.density(s[0].q) + sys.density(s[1].q));
    }
    let polygon: Vec<HPoint> = orbit.samples[..orbit.samples.len() - 1].iter().map(|s| s.q).collect();
    let n = polygon.len() as f64;
    let apex = HPoint::raw(polygon.iter().map(|p| p.x).sum::<f64>() / n, polygon.iter().map(|p| p.y).sum::<f64>() / n);
    let beta_circulation = fan_flux(apex, &polygon, &|p| sys.density(p) + a_sigma);
    let energy_term = 2.0 * k * period;
    let field_term = a_sigma * field_integral;
    let total = energy_term + beta_circulation + field_term;
    Ok(LiouvilleReport { period, a_sigma, energy_term, beta_circulation, field_term, total, normalized: total / period })
}

/// Liouville action of the small round orbit about the field minimum.
pub fn small_orbit_liouville(sys: &MagneticSystem, k: f64) -> Result<LiouvilleReport, DynamicsError> {
    let sys_k = sys.with_energy(k)?;
    let report = small_orbit_period(sys.field_minimum_point(), &sys_k, k)?;
    let f0 = sys.density(sys.field_minimum_point());
    let start = circle_state(sys.field_minimum_point(), report.radius, -f0.signum(), k);
    let orbit = closed_orbit(start, &sys_k, report.measured_period, 1e-3)?;
    liouville_action(&orbit, &sys_k)
}
