//! Magnetic systems on the octagon surface: field density, its primitive on
//! the universal cover, and total flux.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    cosh_distance, hyperbolic_distance, octagon_group, to_disk_at, Covector, FuchsianGenus2, HPoint, Isometry,
};

use super::DynamicsError;
use crate::quadrature::gl8_unit;

/// Surface area of a closed genus-2 hyperbolic surface, `−2πχ`.
pub const SURFACE_AREA: f64 = 4.0 * PI;

/// Euler characteristic of the genus-2 surface.
pub const EULER_CHARACTERISTIC: f64 = -2.0;

/// Relation between the sign of `f` and the turning direction of orbits.
///
/// `Lagrangian` is the convention of the action `½|v|² + θ(v)` with
/// `dθ = σ`: a positive field turns orbits clockwise. `LeftTurn` flips
/// this, which is the same as replacing `σ` by `−σ` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnConvention {
    #[default]
    Lagrangian,
    LeftTurn,
}

impl TurnConvention {
    pub fn sign(self) -> f64 {
        match self {
            TurnConvention::Lagrangian => 1.0,
            TurnConvention::LeftTurn => -1.0,
        }
    }
}

/// Parameters of the bump that makes the field oscillate:
/// `f = s·(1 − amplitude·φ(u/U))`, `u = cosh d(p, center) − 1`,
/// `U = cosh radius − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpParams {
    pub amplitude: f64,
    pub radius: f64,
    pub center: HPoint,
}

impl Default for BumpParams {
    fn default() -> Self {
        Self { amplitude: 2.0, radius: 1.0, center: HPoint::I }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldKind {
    Constant,
    Oscillating(BumpParams),
}

/// Smooth compactly supported profile `φ(τ) = exp(1 − 1/(1 − τ²))` on
/// `[0, 1)`, with `φ(0) = 1`, and its tabulated integral.
#[derive(Debug, Clone)]
pub struct BumpProfile {
    /// `Φ(τ_j)` at uniform nodes `τ_j = j/n` on `[0, 1]`.
    integral: Vec<f64>,
}

const PROFILE_NODES: usize = 4096;

/// `φ(τ)`; zero for `|τ| ≥ 1`.
#[inline]
pub fn bump_phi(tau: f64) -> f64 {
    let t2 = tau * tau;
    if t2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t2)).exp()
    }
}

/// `φ'(τ)`.
#[inline]
pub fn bump_phi_prime(tau: f64) -> f64 {
    let t2 = tau * tau;
    if t2 >= 1.0 {
        0.0
    } else {
        let d = 1.0 - t2;
        -2.0 * tau / (d * d) * bump_phi(tau)
    }
}

impl BumpProfile {
    pub fn new() -> Self {
        let h = 1.0 / PROFILE_NODES as f64;
        let mut integral = Vec::with_capacity(PROFILE_NODES + 1);
        let mut acc = 0.0;
        integral.push(0.0);
        for j in 0..PROFILE_NODES {
            let a = j as f64 * h;
            let piece: f64 = gl8_unit().map(|(t, w)| w * bump_phi(a + t * h)).sum();
            acc += piece * h;
            integral.push(acc);
        }
        Self { integral }
    }

    /// `Φ(τ) = ∫₀^τ φ`, by cubic Hermite interpolation with exact slopes.
    pub fn integral(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        if tau >= 1.0 {
            return self.integral[PROFILE_NODES];
        }
        let h = 1.0 / PROFILE_NODES as f64;
        let pos = tau / h;
        let j = (pos.floor() as usize).min(PROFILE_NODES - 1);
        let t = pos - j as f64;
        let (p0, p1) = (self.integral[j], self.integral[j + 1]);
        let (m0, m1) = (bump_phi(j as f64 * h) * h, bump_phi((j + 1) as f64 * h) * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }

    /// `Φ(τ)/τ`, finite at zero.
    pub fn integral_over_tau(&self, tau: f64) -> f64 {
        if tau < 1e-3 {
            // φ = 1 − τ² + τ⁴/2 + O(τ⁶) ⇒ Φ/τ = 1 − τ²/3 + τ⁴/10
            let t2 = tau * tau;
            1.0 - t2 / 3.0 + t2 * t2 / 10.0
        } else {
            self.integral(tau) / tau
        }
    }

    pub fn total(&self) -> f64 {
        self.integral[PROFILE_NODES]
    }
}

impl Default for BumpProfile {
    fn default() -> Self {
        Self::new()
    }
}

/// A magnetic system `(g, σ)` on the octagon surface with an energy context.
#[derive(Debug, Clone)]
pub struct MagneticSystem {
    pub strength: f64,
    pub field: FieldKind,
    pub energy: f64,
    pub convention: TurnConvention,
    group: Arc<FuchsianGenus2>,
    profile: Arc<BumpProfile>,
    /// Bump centers `h·p₀` for group elements `h` of short word length.
    copies: Arc<Vec<HPoint>>,
}

/// Word length of the group ball whose bump copies are tracked.
const COPY_WORD_LENGTH: usize = 3;

impl MagneticSystem {
    pub fn constant(strength: f64, energy: f64) -> Result<Self, DynamicsError> {
        Self::build(strength, FieldKind::Constant, energy, TurnConvention::default())
    }

    pub fn oscillating(strength: f64, energy: f64, bump: BumpParams) -> Result<Self, DynamicsError> {
        Self::build(strength, FieldKind::Oscillating(bump), energy, TurnConvention::default())
    }

    pub fn build(strength: f64, field: FieldKind, energy: f64, convention: TurnConvention) -> Result<Self, DynamicsError> {
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(DynamicsError::InvalidParameter { name: "k", value: energy });
        }
        if !strength.is_finite() {
            return Err(DynamicsError::InvalidParameter { name: "s", value: strength });
        }
        let group = Arc::new(octagon_group()?);
        let mut copies = Vec::new();
        if let FieldKind::Oscillating(b) = field {
            if !(b.radius > 0.0) || !b.radius.is_finite() {
                return Err(DynamicsError::InvalidParameter { name: "rho", value: b.radius });
            }
            if !(b.amplitude > 0.0) || !b.amplitude.is_finite() {
                return Err(DynamicsError::InvalidParameter { name: "amplitude", value: b.amplitude });
            }
            if !(b.center.y > 0.0) {
                return Err(DynamicsError::InvalidParameter { name: "p0.y", value: b.center.y });
            }
            let reach = hyperbolic_distance(b.center, HPoint::I) + b.radius;
            if reach >= octagon_inradius() {
                return Err(DynamicsError::BumpOutsideDomain { reach, inradius: octagon_inradius() });
            }
            copies = group.ball(COPY_WORD_LENGTH).into_iter().map(|(_, g)| g.apply(b.center)).collect();
        }
        let sys = Self {
            strength,
            field,
            energy,
            convention,
            group,
            profile: Arc::new(BumpProfile::new()),
            copies: Arc::new(copies),
        };
        if let FieldKind::Oscillating(b) = field {
            if strength != 0.0 && b.amplitude > 1.0 && sys.total_flux() * sys.signed_strength() <= 0.0 {
                return Err(DynamicsError::NonPositiveFlux { flux: sys.total_flux() });
            }
        }
        Ok(sys)
    }

    pub fn with_energy(&self, energy: f64) -> Result<Self, DynamicsError> {
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(DynamicsError::InvalidParameter { name: "k", value: energy });
        }
        Ok(Self { energy, ..self.clone() })
    }

    pub fn with_convention(&self, convention: TurnConvention) -> Self {
        Self { convention, ..self.clone() }
    }

    pub fn group(&self) -> &FuchsianGenus2 {
        &self.group
    }

    pub fn bump(&self) -> Option<BumpParams> {
        match self.field {
            FieldKind::Constant => None,
            FieldKind::Oscillating(b) => Some(b),
        }
    }

    /// Point where `f` is smallest: the bump center, or `i` for a constant field.
    pub fn field_minimum_point(&self) -> HPoint {
        self.bump().map_or(HPoint::I, |b| b.center)
    }

    fn signed_strength(&self) -> f64 {
        self.strength * self.convention.sign()
    }

    /// Bump factor `φ(u/U)` at a point of the plane already known to be
    /// near the fundamental domain (no reduction).
    #[inline]
    fn bump_factor_local(&self, b: &BumpParams, p: HPoint) -> f64 {
        let u = cosh_distance(p, b.center) - 1.0;
        bump_phi(u / (b.radius.cosh() - 1.0))
    }

    /// Density `f` of `σ = f·μ` at any point of the plane (G-periodic).
    pub fn density(&self, p: HPoint) -> f64 {
        let s = self.signed_strength();
        match &self.field {
            FieldKind::Constant => s,
            FieldKind::Oscillating(b) => {
                let u_cap = b.radius.cosh() - 1.0;
                let near = cosh_distance(p, b.center) - 1.0;
                if near < u_cap {
                    return s * (1.0 - b.amplitude * bump_phi(near / u_cap));
                }
                if self.group.contains(p) {
                    return s;
                }
                match self.group.reduce_to_domain(p) {
                    Ok((q, _)) => s * (1.0 - b.amplitude * self.bump_factor_local(b, q)),
                    Err(_) => s,
                }
            }
        }
    }

    /// Density and its Euclidean coordinate gradient.
    pub fn density_with_gradient(&self, p: HPoint) -> (f64, [f64; 2]) {
        let s = self.signed_strength();
        match &self.field {
            FieldKind::Constant => (s, [0.0, 0.0]),
            FieldKind::Oscillating(b) => {
                let (q, g) = if cosh_distance(p, b.center) - 1.0 < b.radius.cosh() - 1.0 || self.group.contains(p) {
                    (p, Isometry::IDENTITY)
                } else {
                    match self.group.reduce_with_isometry(p) {
                        Ok((q, _, g)) => (q, g),
                        Err(_) => return (s, [0.0, 0.0]),
                    }
                };
                let u_cap = b.radius.cosh() - 1.0;
                let c = b.center;
                let dx = q.x - c.x;
                let dy = q.y - c.y;
                let u = (dx * dx + dy * dy) / (2.0 * q.y * c.y);
                let tau = u / u_cap;
                let val = s * (1.0 - b.amplitude * bump_phi(tau));
                let dphi = bump_phi_prime(tau) / u_cap;
                let du_dx = dx / (q.y * c.y);
                let du_dy = dy / (q.y * c.y) - u / q.y;
                let gq = [-s * b.amplitude * dphi * du_dx, -s * b.amplitude * dphi * du_dy];
                // Chain rule through the holomorphic reduction map.
                let d = g.derivative(p);
                let gp = [gq[0] * d.re + gq[1] * d.im, -gq[0] * d.im + gq[1] * d.re];
                (val, gp)
            }
        }
    }

    /// `∫_M σ` over the surface.
    pub fn total_flux(&self) -> f64 {
        let s = self.signed_strength();
        match &self.field {
            FieldKind::Constant => s * SURFACE_AREA,
            FieldKind::Oscillating(b) => {
                let u_cap = b.radius.cosh() - 1.0;
                s * (SURFACE_AREA - b.amplitude * 2.0 * PI * u_cap * self.profile.total())
            }
        }
    }

    /// `a_σ = ∫σ / (2πχ)`.
    pub fn a_sigma(&self) -> f64 {
        self.total_flux() / (2.0 * PI * EULER_CHARACTERISTIC)
    }

    /// `(min f, max f)` over the surface.
    pub fn density_range(&self) -> (f64, f64) {
        let s = self.signed_strength();
        match &self.field {
            FieldKind::Constant => (s, s),
            FieldKind::Oscillating(b) => {
                let lo = s * (1.0 - b.amplitude);
                (lo.min(s), lo.max(s))
            }
        }
    }

    /// Flux of σ through the hyperbolic disc of radius `r` centered at the
    /// field minimum point.
    pub fn disc_flux(&self, r: f64) -> f64 {
        let s = self.signed_strength();
        let u = r.cosh() - 1.0;
        match &self.field {
            FieldKind::Constant => s * 2.0 * PI * u,
            FieldKind::Oscillating(b) => {
                let u_cap = b.radius.cosh() - 1.0;
                s * 2.0 * PI * (u - b.amplitude * u_cap * self.profile.integral(u / u_cap))
            }
        }
    }

    /// Density at hyperbolic distance `r` from the field minimum point.
    pub fn radial_density(&self, r: f64) -> f64 {
        let s = self.signed_strength();
        match &self.field {
            FieldKind::Constant => s,
            FieldKind::Oscillating(b) => s * (1.0 - b.amplitude * bump_phi((r.cosh() - 1.0) / (b.radius.cosh() - 1.0))),
        }
    }

    /// Bump centers in the plane whose support comes within `margin` of
    /// some point of `pts`, split into (touching, distant) lists among the
    /// tracked copies.
    pub fn classify_copies(&self, pts: &[HPoint], margin: f64) -> (Vec<HPoint>, Vec<HPoint>) {
        let Some(b) = self.bump() else { return (Vec::new(), Vec::new()) };
        let reach = (b.radius + margin).cosh();
        let mut near = Vec::new();
        let mut far = Vec::new();
        for c in self.copies.iter() {
            if pts.iter().any(|p| cosh_distance(*p, *c) < reach) {
                near.push(*c);
            } else {
                far.push(*c);
            }
        }
        (near, far)
    }

    /// All tracked bump centers.
    pub fn bump_copies(&self) -> &[HPoint] {
        &self.copies
    }

    /// Constant part `s·dx/y` of the primitive.
    #[inline]
    pub fn theta_constant(&self, p: HPoint) -> Covector {
        Covector { dx: self.signed_strength() / p.y, dy: 0.0 }
    }

    /// Radial primitive of the bump centered at `c`, evaluated at `p`:
    /// `F(r)·dϑ` with `F' = f_bump·sinh r`, written in the disk chart at `c`.
    #[inline]
    pub fn theta_bump(&self, c: HPoint, p: HPoint) -> Covector {
        let Some(b) = self.bump() else { return Covector::ZERO };
        let s = self.signed_strength();
        let u_cap = b.radius.cosh() - 1.0;
        let zeta = to_disk_at(c, p);
        let w = zeta.norm_sqr();
        let cz = c.to_complex();
        let zc = p.to_complex() - cz.conj();
        let dzeta = (cz - cz.conj()) / (zc * zc);
        let a: Complex64 = zeta.conj() * dzeta;
        // F/w with F = −sA·U·Φ(u/U), u = 2w/(1 − w).
        let tau = 2.0 * w / (u_cap * (1.0 - w));
        let k = -s * b.amplitude * self.profile.integral_over_tau(tau) * 2.0 / (1.0 - w);
        Covector { dx: k * a.im, dy: k * a.re }
    }

    /// Asymptotic coefficient of `dϑ` in [`theta_bump`](Self::theta_bump)
    /// outside the support.
    pub fn bump_winding_coefficient(&self) -> f64 {
        match self.bump() {
            None => 0.0,
            Some(b) => -self.signed_strength() * b.amplitude * (b.radius.cosh() - 1.0) * self.profile.total(),
        }
    }

    /// Full primitive `s·dx/y + Σ θ_c` over the given bump centers.
    pub fn theta(&self, p: HPoint, copies: &[HPoint]) -> Covector {
        copies.iter().fold(self.theta_constant(p), |acc, c| acc + self.theta_bump(*c, p))
    }

    pub fn profile(&self) -> &BumpProfile {
        &self.profile
    }
}

/// Hyperbolic inradius of the regular octagon with angle π/4,
/// `arccosh(cot(π/8))`.
pub fn octagon_inradius() -> f64 {
    (1.0 + 2f64.sqrt()).acosh()
}
