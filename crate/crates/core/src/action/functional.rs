//! The free-period action `S_k(x, T) = ∫ ½|ẋ|² dt + kT + ∫_x θ` on
//! discretized loops, with its exact gradient.
//!
//! Kinetic term: `Σ d(q_i, q_{i+1})² / (2 h_i)`, the discrete geodesic
//! energy. Magnetic term: the line integral of the primitive over straight
//! coordinate edges, which equals the flux of σ through any capping disc of
//! the polygon. Non-contractible loops carry the convention offset of their
//! class.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{bump_phi, BumpParams, FieldKind, MagneticSystem, TurnConvention};
use crate::geometry::{
    cosh_distance, hyperbolic_distance, inv_log_mean, inv_log_mean_grad, segment_length, HPoint, Isometry,
};
use crate::quadrature::{fan_flux, gl8_unit};

use super::loops::{iterate_loop, LoopClass, LoopPath};
use super::ActionError;

/// Longest coordinate-segment hyperbolic length integrated by one
/// Gauss–Legendre panel.
const PANEL_LENGTH: f64 = 0.2;

/// Every bump copy centered within this distance of `i` is tracked by the
/// system.
pub const TRACKED_COPY_RADIUS: f64 = 4.85;

/// Word length of the group ball whose bump copies the system tracks.
const COPY_WORD_LENGTH: usize = 3;

/// Gradient of the action: coordinate partials `∂S/∂q_i` and `∂S/∂T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGradient {
    pub points: Vec<[f64; 2]>,
    pub d_period: f64,
}

impl ActionGradient {
    /// Pointwise Euler–Lagrange defect `y_i·|∂S/∂q_i| / h̄_i`, in units of
    /// acceleration.
    pub fn defects(&self, lp: &LoopPath) -> Vec<f64> {
        let n = lp.len();
        (0..n)
            .map(|i| {
                let hbar = 0.5 * (lp.step(i) + lp.step((i + n - 1) % n));
                let g = self.points[i];
                lp.points[i].y * g[0].hypot(g[1]) / hbar
            })
            .collect()
    }

    /// `(Σ h̄_i·defect_i² + (∂S/∂T)²)^{1/2}`.
    pub fn norm(&self, lp: &LoopPath) -> f64 {
        let n = lp.len();
        let d = self.defects(lp);
        let sum: f64 = (0..n).map(|i| 0.5 * (lp.step(i) + lp.step((i + n - 1) % n)) * d[i] * d[i]).sum();
        (sum + self.d_period * self.d_period).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub class: String,
    pub n_points: usize,
    #[serde(rename = "T")]
    pub period: f64,
    pub k: f64,
    pub kinetic: f64,
    pub energy_term: f64,
    /// Magnetic term including the class offset.
    pub flux: f64,
    pub total: f64,
    #[serde(rename = "dSdT")]
    pub d_period: f64,
    pub grad_norm: f64,
    pub max_defect: f64,
    /// Difference between the line-integral flux and an independent area
    /// quadrature over a fan of the polygon (contractible loops only).
    pub flux_crosscheck: Option<f64>,
}

/// Reference loops fixing the additive constant of the magnetic term in
/// each non-contractible class: `S(x_ν) = K(x_ν) + kT_ν` for the reference
/// `x_ν`, and iterates `ψⁿ(x_ν)` serve as references for `νⁿ`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ActionConvention {
    references: BTreeMap<String, ClassReference>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassReference {
    reference: LoopPath,
    offset: f64,
    fingerprint: FieldFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FieldFingerprint {
    strength: f64,
    field: FieldKind,
    convention: TurnConvention,
}

impl FieldFingerprint {
    fn of(sys: &MagneticSystem) -> Self {
        Self { strength: sys.strength, field: sys.field, convention: sys.convention }
    }
}

impl ActionConvention {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `reference` as the zero of the magnetic term in its class.
    pub fn register(&mut self, sys: &MagneticSystem, reference: &LoopPath) -> Result<(), ActionError> {
        let LoopClass::Deck { word, deck } = &reference.class else {
            return Err(ActionError::ContractibleReference);
        };
        let expected = sys.group().word_isometry(word);
        if expected.projective_distance(deck) > 1e-9 {
            return Err(ActionError::DeckMismatch { word: word.to_string() });
        }
        let offset = open_flux(sys, reference)?;
        self.references.insert(
            word.to_string(),
            ClassReference { reference: reference.clone(), offset, fingerprint: FieldFingerprint::of(sys) },
        );
        Ok(())
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.references.keys().map(String::as_str)
    }

    /// Value subtracted from the open line integral for loops in `class`.
    pub fn offset(&self, sys: &MagneticSystem, class: &LoopClass) -> Result<f64, ActionError> {
        let LoopClass::Deck { word, .. } = class else { return Ok(0.0) };
        let label = word.to_string();
        let check = |r: &ClassReference| {
            if r.fingerprint != FieldFingerprint::of(sys) {
                Err(ActionError::ConventionMismatch { class: label.clone() })
            } else {
                Ok(())
            }
        };
        if let Some(r) = self.references.get(&label) {
            check(r)?;
            return Ok(r.offset);
        }
        for r in self.references.values() {
            let LoopClass::Deck { word: base, .. } = &r.reference.class else { continue };
            if base.is_empty() || word.len() % base.len() != 0 {
                continue;
            }
            let n = word.len() / base.len();
            if n > 1 && word.0.chunks(base.len()).all(|c| c == base.0.as_slice()) {
                check(r)?;
                return open_flux(sys, &iterate_loop(&r.reference, n)?);
            }
        }
        Err(ActionError::NoReference { class: label })
    }
}

/// `S_k` with its diagnostics.
pub fn action_sk(
    lp: &LoopPath,
    sys: &MagneticSystem,
    k: f64,
    convention: &ActionConvention,
) -> Result<ActionReport, ActionError> {
    let eval = evaluate(lp, sys, true)?;
    let offset = convention.offset(sys, &lp.class)?;
    let flux = eval.flux - offset;
    let d_period = k - eval.kinetic / lp.period;
    let grad = ActionGradient { points: eval.grad.expect("gradient requested"), d_period };
    let defects = grad.defects(lp);
    let crosscheck = if lp.class.is_contractible() {
        let n = lp.len() as f64;
        let apex = HPoint::raw(lp.points.iter().map(|p| p.x).sum::<f64>() / n, lp.points.iter().map(|p| p.y).sum::<f64>() / n);
        Some(eval.flux - fan_flux(apex, &lp.points, &|p| sys.density(p)))
    } else {
        None
    };
    Ok(ActionReport {
        class: lp.class.label(),
        n_points: lp.len(),
        period: lp.period,
        k,
        kinetic: eval.kinetic,
        energy_term: k * lp.period,
        flux,
        total: eval.kinetic + k * lp.period + flux,
        d_period,
        grad_norm: grad.norm(lp),
        max_defect: defects.iter().copied().fold(0.0, f64::max),
        flux_crosscheck: crosscheck,
    })
}

/// `S_k(x, T)` alone.
pub fn action_value(
    lp: &LoopPath,
    sys: &MagneticSystem,
    k: f64,
    convention: &ActionConvention,
) -> Result<f64, ActionError> {
    let eval = evaluate(lp, sys, false)?;
    Ok(eval.kinetic + k * lp.period + eval.flux - convention.offset(sys, &lp.class)?)
}

/// Value and exact gradient of `S_k`.
pub fn action_gradient(
    lp: &LoopPath,
    sys: &MagneticSystem,
    k: f64,
    convention: &ActionConvention,
) -> Result<(f64, ActionGradient), ActionError> {
    let eval = evaluate(lp, sys, true)?;
    let value = eval.kinetic + k * lp.period + eval.flux - convention.offset(sys, &lp.class)?;
    let grad = ActionGradient { points: eval.grad.expect("gradient requested"), d_period: k - eval.kinetic / lp.period };
    Ok((value, grad))
}

/// Magnetic term of a contractible loop: the flux of σ through a capping
/// disc of the polygon.
pub fn enclosed_flux(lp: &LoopPath, sys: &MagneticSystem) -> Result<f64, ActionError> {
    if !lp.class.is_contractible() {
        return Err(ActionError::NotContractible);
    }
    Ok(evaluate(lp, sys, false)?.flux)
}

/// Discrete kinetic term `Σ d(q_i, q_{i+1})²/(2h_i)`.
pub fn kinetic_energy(lp: &LoopPath) -> f64 {
    (0..lp.len())
        .map(|i| {
            let d = hyperbolic_distance(lp.point(i), lp.point(i + 1));
            d * d / (2.0 * lp.step(i))
        })
        .sum()
}

struct Evaluation {
    kinetic: f64,
    /// Line integral of θ over the closed polygon, or `∫_x θ − h_g(q_0)`
    /// for a deck-closed chain.
    flux: f64,
    grad: Option<Vec<[f64; 2]>>,
}

/// `∫_x θ − h_g(q_0)` for a deck-closed loop; plain `∮θ` otherwise.
fn open_flux(sys: &MagneticSystem, lp: &LoopPath) -> Result<f64, ActionError> {
    Ok(evaluate(lp, sys, false)?.flux)
}

/// Each bump support lies inside the tile of its center, so a point only
/// feels the copy of its own tile. Points far from `i` must lie in tiles of
/// word length at most `COPY_WORD_LENGTH − 1`, so that their tile and its
/// neighbors all carry tracked copies.
fn check_coverage(sys: &MagneticSystem, b: &BumpParams, pts: &[HPoint]) -> Result<(), ActionError> {
    let n = pts.len() - 1;
    let edge = (0..n).map(|i| segment_length(pts[i], pts[i + 1])).fold(0.0, f64::max);
    let allowed = TRACKED_COPY_RADIUS - b.radius - hyperbolic_distance(b.center, HPoint::I) - edge;
    for p in pts {
        let r = hyperbolic_distance(*p, HPoint::I);
        if r <= allowed {
            continue;
        }
        let (_, word) = sys.group().reduce_to_domain(*p)?;
        if word.reduced().len() >= COPY_WORD_LENGTH {
            return Err(ActionError::OutOfRange { distance: r, allowed });
        }
    }
    Ok(())
}

/// `d²` between two points with gradients in both arguments.
fn dist_sq_with_grad(p: HPoint, q: HPoint) -> (f64, [f64; 2], [f64; 2]) {
    let (dx, dy) = (p.x - q.x, p.y - q.y);
    let yy = p.y * q.y;
    let u = (dx * dx + dy * dy) / (2.0 * yy);
    let d = 2.0 * (0.5 * u).sqrt().asinh();
    // d/sinh d, analytic at 0.
    let ratio = if d < 1e-3 {
        let d2 = d * d;
        1.0 - d2 / 6.0 + 7.0 * d2 * d2 / 360.0
    } else {
        d / (u * (u + 2.0)).sqrt()
    };
    let gp = [2.0 * ratio * dx / yy, 2.0 * ratio * (dy / yy - u / p.y)];
    let gq = [-2.0 * ratio * dx / yy, 2.0 * ratio * (-dy / yy - u / q.y)];
    (d * d, gp, gq)
}

/// Transposed real Jacobian of a holomorphic map with derivative `d`,
/// applied to a covector.
fn pull_back(d: Complex64, g: [f64; 2]) -> [f64; 2] {
    [g[0] * d.re + g[1] * d.im, -g[0] * d.im + g[1] * d.re]
}

fn evaluate(lp: &LoopPath, sys: &MagneticSystem, want_grad: bool) -> Result<Evaluation, ActionError> {
    lp.validate()?;
    let n = lp.len();
    let pts: Vec<HPoint> = (0..=n).map(|i| lp.point(i)).collect();
    if let Some(b) = sys.bump() {
        check_coverage(sys, &b, &pts)?;
    }
    let s = sys.strength * sys.convention.sign();
    // Gradients indexed 0..=n; entry n is folded back through the deck map.
    let mut grad = vec![[0.0; 2]; if want_grad { n + 1 } else { 0 }];

    let mut kinetic = 0.0;
    let mut flux = 0.0;
    let seglen: Vec<f64> = (0..n).map(|i| segment_length(pts[i], pts[i + 1])).collect();
    for i in 0..n {
        let (a, b) = (pts[i], pts[i + 1]);
        let h = lp.step(i);
        let (d2, ga, gb) = dist_sq_with_grad(a, b);
        kinetic += d2 / (2.0 * h);
        let l = inv_log_mean(a.y, b.y);
        let dx = b.x - a.x;
        flux += s * dx * l;
        if want_grad {
            let (la, lb) = inv_log_mean_grad(a.y, b.y);
            grad[i][0] += ga[0] / (2.0 * h) - s * l;
            grad[i][1] += ga[1] / (2.0 * h) + s * dx * la;
            grad[i + 1][0] += gb[0] / (2.0 * h) + s * l;
            grad[i + 1][1] += gb[1] / (2.0 * h) + s * dx * lb;
        }
    }

    if let Some(bump) = sys.bump() {
        let u_cap = bump.radius.cosh() - 1.0;
        let k_inf = sys.bump_winding_coefficient();
        let copies: Vec<HPoint> = if lp.class.is_contractible() {
            let reach = pts.iter().map(|p| hyperbolic_distance(pts[0], *p)).fold(0.0, f64::max)
                + seglen.iter().copied().fold(0.0, f64::max)
                + bump.radius
                + 0.1;
            let ch = reach.cosh();
            sys.bump_copies().iter().copied().filter(|c| cosh_distance(*c, pts[0]) < ch).collect()
        } else {
            sys.bump_copies().to_vec()
        };
        for c in &copies {
            let cz = c.to_complex();
            for i in 0..n {
                let (a, b) = (pts[i], pts[i + 1]);
                let near_cosh = (bump.radius + seglen[i] + 1e-3).cosh();
                let near = cosh_distance(a, *c) < near_cosh || cosh_distance(b, *c) < near_cosh;
                if !near {
                    let (az, bz) = (a.to_complex(), b.to_complex());
                    let dtheta = ((bz - cz) / (az - cz)).arg() - ((bz - cz.conj()) / (az - cz.conj())).arg();
                    flux += k_inf * dtheta;
                    continue;
                }
                let panels = (seglen[i] / PANEL_LENGTH).ceil().max(1.0) as usize;
                let (ex, ey) = (b.x - a.x, b.y - a.y);
                for m in 0..panels {
                    for (t0, w0) in gl8_unit() {
                        let t = (m as f64 + t0) / panels as f64;
                        let w = w0 / panels as f64;
                        let p = HPoint::raw(a.x + t * ex, a.y + t * ey);
                        let th = sys.theta_bump(*c, p);
                        flux += w * (th.dx * ex + th.dy * ey);
                        if want_grad {
                            let tau = (cosh_distance(p, *c) - 1.0) / u_cap;
                            if tau < 1.0 {
                                let f = -s * bump.amplitude * bump_phi(tau) / (p.y * p.y);
                                let (nx, ny) = (f * ey, -f * ex);
                                grad[i][0] += w * (1.0 - t) * nx;
                                grad[i][1] += w * (1.0 - t) * ny;
                                grad[i + 1][0] += w * t * nx;
                                grad[i + 1][1] += w * t * ny;
                            }
                        }
                    }
                }
            }
        }
    }

    if let LoopClass::Deck { deck, .. } = &lp.class {
        flux -= deck_correction(sys, deck, pts[0]);
    }

    let grad = want_grad.then(|| {
        if !lp.class.is_contractible() {
            // dh_g absorbs the endpoint terms of the open chain; the exact
            // constant-part derivative above still carries them.
            grad[n][0] -= s / pts[n].y;
            grad[0][0] += s / pts[0].y;
        }
        let last = grad.pop().expect("n + 1 entries");
        let back = if lp.class.is_contractible() { last } else { pull_back(lp.class.deck().derivative(pts[0]), last) };
        grad[0][0] += back[0];
        grad[0][1] += back[1];
        grad
    });
    Ok(Evaluation { kinetic, flux, grad })
}

/// `h_g(p) = ∫_{[i, p]} (g*θ − θ)` for the primitive carrying every tracked
/// bump copy. The form is closed near the fundamental domain, so `h_g` is
/// a potential there and its differential cancels the endpoint terms of
/// the open chain.
fn deck_correction(sys: &MagneticSystem, g: &Isometry, p: HPoint) -> f64 {
    let start = HPoint::I;
    let len = segment_length(start, p);
    let panels = ((len / (0.5 * PANEL_LENGTH)).ceil() as usize).max(1);
    let (ex, ey) = (p.x - start.x, p.y - start.y);
    let copies = sys.bump_copies();
    let mut acc = 0.0;
    for m in 0..panels {
        for (t0, w0) in gl8_unit() {
            let t = (m as f64 + t0) / panels as f64;
            let w = w0 / panels as f64;
            let z = HPoint::raw(start.x + t * ex, start.y + t * ey);
            let gz = g.apply(z);
            let dg = g.derivative(z) * Complex64::new(ex, ey);
            let pulled = sys.theta(gz, copies).apply(dg.re, dg.im);
            let here = sys.theta(z, copies).apply(ex, ey);
            acc += w * (pulled - here);
        }
    }
    acc
}
