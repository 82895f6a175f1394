//! Upper half-plane model of the hyperbolic plane.
//!
//! Metric `(dx² + dy²)/y²`, area form `dx∧dy/y²`, curvature −1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// A point of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    pub x: f64,
    pub y: f64,
}

impl HPoint {
    pub fn new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if !(y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(GeometryError::OutsideHalfPlane { x, y });
        }
        Ok(Self { x, y })
    }

    /// Unchecked constructor for hot loops where `y > 0` is already known.
    #[inline]
    pub const fn raw(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    #[inline]
    pub fn from_complex(z: Complex64) -> Self {
        Self { x: z.re, y: z.im }
    }

    pub const I: HPoint = HPoint { x: 0.0, y: 1.0 };
}

/// A tangent vector in half-plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVec {
    pub base: HPoint,
    pub vx: f64,
    pub vy: f64,
}

impl TangentVec {
    pub fn new(base: HPoint, vx: f64, vy: f64) -> Self {
        Self { base, vx, vy }
    }

    #[inline]
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.vx, self.vy)
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self { vx: self.vx * factor, vy: self.vy * factor, ..self }
    }
}

/// A covector `a dx + b dy`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Covector {
    pub dx: f64,
    pub dy: f64,
}

impl Covector {
    pub const ZERO: Covector = Covector { dx: 0.0, dy: 0.0 };

    #[inline]
    pub fn apply(self, vx: f64, vy: f64) -> f64 {
        self.dx * vx + self.dy * vy
    }

    /// Dual metric norm at `p`: the metric is conformal with factor `1/y²`,
    /// so covectors scale by `y`.
    pub fn dual_norm(self, p: HPoint) -> f64 {
        p.y * self.dx.hypot(self.dy)
    }
}

impl std::ops::Add for Covector {
    type Output = Covector;
    fn add(self, o: Covector) -> Covector {
        Covector { dx: self.dx + o.dx, dy: self.dy + o.dy }
    }
}

impl std::ops::Mul<f64> for Covector {
    type Output = Covector;
    fn mul(self, s: f64) -> Covector {
        Covector { dx: self.dx * s, dy: self.dy * s }
    }
}

fn check_base(p: HPoint) -> Result<(), GeometryError> {
    if p.y > 0.0 && p.y.is_finite() && p.x.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::OutsideHalfPlane { x: p.x, y: p.y })
    }
}

/// Riemannian norm `sqrt(vx² + vy²)/y`.
pub fn metric_norm(v: &TangentVec) -> Result<f64, GeometryError> {
    check_base(v.base)?;
    Ok(v.vx.hypot(v.vy) / v.base.y)
}

/// Metric inner product of two vectors sharing a base point.
pub fn metric_inner(a: &TangentVec, b: &TangentVec) -> Result<f64, GeometryError> {
    check_base(a.base)?;
    if a.base != b.base {
        return Err(GeometryError::BaseMismatch);
    }
    Ok((a.vx * b.vx + a.vy * b.vy) / (a.base.y * a.base.y))
}

/// The bounded primitive `s·dx/y` of `s` times the area form.
pub fn theta_primitive(p: HPoint, s: f64) -> Result<Covector, GeometryError> {
    check_base(p)?;
    Ok(Covector { dx: s / p.y, dy: 0.0 })
}

/// Hyperbolic distance, in the `2·asinh` form which stays accurate for
/// nearby points.
pub fn hyperbolic_distance(p: HPoint, q: HPoint) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    let chord = dx.hypot(dy);
    2.0 * (chord / (2.0 * (p.y * q.y).sqrt())).asinh()
}

/// `cosh` of the hyperbolic distance; cheaper than the distance itself and
/// monotone in it.
#[inline]
pub fn cosh_distance(p: HPoint, q: HPoint) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    1.0 + (dx * dx + dy * dy) / (2.0 * p.y * q.y)
}

/// Quarter turn in the positive sense. The metric is conformal, so the
/// Euclidean rotation of the components is metric-orthogonal and norm
/// preserving.
pub fn rotate90(v: TangentVec) -> TangentVec {
    TangentVec { base: v.base, vx: -v.vy, vy: v.vx }
}

/// Hyperbolic length of the coordinate-straight segment from `a` to `b`,
/// `|b − a|·∫₀¹ dt/y(t)`.
pub fn segment_length(a: HPoint, b: HPoint) -> f64 {
    let chord = (b.x - a.x).hypot(b.y - a.y);
    chord * inv_log_mean(a.y, b.y)
}

/// `∫₀¹ dt / ((1−t)·y₁ + t·y₂)` = `ln(y₂/y₁)/(y₂ − y₁)`, with the removable
/// singularity at `y₁ = y₂` handled by a series.
#[inline]
pub fn inv_log_mean(y1: f64, y2: f64) -> f64 {
    let r = (y2 - y1) / (y2 + y1);
    if r.abs() < 1e-4 {
        // ln((1+r)/(1−r))/(2r) = 1 + r²/3 + r⁴/5 + ...
        let r2 = r * r;
        2.0 / (y1 + y2) * (1.0 + r2 / 3.0 + r2 * r2 / 5.0 + r2 * r2 * r2 / 7.0)
    } else {
        (y2 / y1).ln() / (y2 - y1)
    }
}

/// Derivatives of [`inv_log_mean`] with respect to `y1` and `y2`.
pub fn inv_log_mean_grad(y1: f64, y2: f64) -> (f64, f64) {
    let r = (y2 - y1) / (y2 + y1);
    if r.abs() < 1e-4 {
        // Symmetric expansion about the mean m = (y1+y2)/2 with d = (y2−y1)/2:
        // L = 1/m · (1 + d²/(3m²) + d⁴/(5m⁴) + ...)
        let m = 0.5 * (y1 + y2);
        let d = 0.5 * (y2 - y1);
        let q = d / m;
        let q2 = q * q;
        let dl_dm = -1.0 / (m * m) * (1.0 + q2 + q2 * q2 + q2 * q2 * q2);
        let dl_dd = 1.0 / m * (2.0 * q / (3.0 * m) + 4.0 * q2 * q / (5.0 * m) + 6.0 * q2 * q2 * q / (7.0 * m));
        (0.5 * dl_dm - 0.5 * dl_dd, 0.5 * dl_dm + 0.5 * dl_dd)
    } else {
        let l = (y2 / y1).ln();
        let d = y2 - y1;
        let d1 = (-1.0 / y1) / d + l / (d * d);
        let d2 = (1.0 / y2) / d - l / (d * d);
        (d1, d2)
    }
}

/// Maps `p` into the unit disk with `center` sent to the origin.
#[inline]
pub fn to_disk_at(center: HPoint, p: HPoint) -> Complex64 {
    let z = p.to_complex();
    let c = center.to_complex();
    (z - c) / (z - c.conj())
}

/// Parallel transport of `v` along the geodesic from its base point to `target`.
///
/// Realized as the differential of the hyperbolic transvection along that
/// geodesic, built by conjugating a disk translation.
pub fn parallel_transport(v: TangentVec, target: HPoint) -> TangentVec {
    let p = v.base;
    // Disk chart centered at p: ζ = (z − p)/(z − p̄); w = image of the target.
    let w = to_disk_at(p, target);
    // Transvection in the disk taking 0 to w: (ζ + w)/(1 + w̄ζ). Its derivative
    // at 0 is 1 − |w|² (real), so the transported vector in the disk chart is
    // scaled by that factor. Pull both ends back to the half-plane.
    let one = Complex64::new(1.0, 0.0);
    let pc = p.to_complex();
    // dζ/dz at z: (p − p̄)/(z − p̄)²
    let dchart_at_p = (pc - pc.conj()) / ((pc - pc.conj()) * (pc - pc.conj()));
    let tc = target.to_complex();
    let dchart_at_t = (pc - pc.conj()) / ((tc - pc.conj()) * (tc - pc.conj()));
    let dv_disk = v.to_complex() * dchart_at_p * (one - w.norm_sqr());
    let out = dv_disk / dchart_at_t;
    TangentVec { base: target, vx: out.re, vy: out.im }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_norm_examples() {
        let v = TangentVec::new(HPoint::raw(0.0, 1.0), 1.0, 0.0);
        assert_eq!(metric_norm(&v).unwrap(), 1.0);
        let v = TangentVec::new(HPoint::raw(0.0, 2.0), 2.0, 0.0);
        assert_eq!(metric_norm(&v).unwrap(), 1.0);
        let v = TangentVec::new(HPoint::raw(3.0, 0.5), 0.3, 0.4);
        assert!((metric_norm(&v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn metric_norm_rejects_lower_half_plane() {
        let v = TangentVec::new(HPoint::raw(0.0, -1.0), 1.0, 0.0);
        assert!(metric_norm(&v).is_err());
        assert!(HPoint::new(0.0, 0.0).is_err());
    }

    #[test]
    fn theta_primitive_examples() {
        let c = theta_primitive(HPoint::raw(0.0, 1.0), 1.0).unwrap();
        assert_eq!((c.dx, c.dy), (1.0, 0.0));
        assert_eq!(c.dual_norm(HPoint::raw(0.0, 1.0)), 1.0);
        let c = theta_primitive(HPoint::raw(7.0, 10.0), 0.0).unwrap();
        assert_eq!((c.dx, c.dy), (0.0, 0.0));
        let p = HPoint::raw(0.0, 0.25);
        let c = theta_primitive(p, 2.0).unwrap();
        assert_eq!((c.dx, c.dy), (8.0, 0.0));
        assert_eq!(c.dual_norm(p), 2.0);
    }

    #[test]
    fn distance_examples() {
        let p = HPoint::raw(0.0, 1.0);
        assert_eq!(hyperbolic_distance(p, p), 0.0);
        let q = HPoint::raw(0.0, std::f64::consts::E);
        // ∫₁^e dy/y by composite Simpson as an independent check.
        let n = 2000;
        let h = (std::f64::consts::E - 1.0) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let y = 1.0 + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w / y;
        }
        acc *= h / 3.0;
        assert!((hyperbolic_distance(p, q) - acc).abs() < 1e-12);
        assert!((hyperbolic_distance(p, q) - 1.0).abs() < 1e-15);
    }

    /// Integrates the geodesic equation from `i` at unit speed, launching
    /// at angle `alpha`, until `x` reaches 1; returns (y, elapsed time).
    fn shoot(alpha: f64) -> (f64, f64) {
        let rhs = |s: [f64; 4]| {
            let [_, y, vx, vy] = s;
            [vx, vy, 2.0 * vx * vy / y, (vy * vy - vx * vx) / y]
        };
        let mut s = [0.0, 1.0, alpha.cos(), alpha.sin()];
        let h = 1e-4;
        let mut t = 0.0;
        loop {
            let add = |a: [f64; 4], b: [f64; 4], c: f64| {
                [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]]
            };
            let k1 = rhs(s);
            let k2 = rhs(add(s, k1, h / 2.0));
            let k3 = rhs(add(s, k2, h / 2.0));
            let k4 = rhs(add(s, k3, h));
            let next = [
                s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                s[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
                s[3] + h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
            ];
            if next[0] >= 1.0 {
                // linear interpolation to x = 1
                let frac = (1.0 - s[0]) / (next[0] - s[0]);
                return (s[1] + frac * (next[1] - s[1]), t + frac * h);
            }
            s = next;
            t += h;
        }
    }

    #[test]
    fn distance_matches_geodesic_shooting() {
        let target = HPoint::raw(1.0, 1.0);
        // Launch angles bracket: straight right lands low, steep lands high.
        let (mut lo, mut hi) = (0.0_f64, 1.2_f64);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if shoot(mid).0 < 1.0 { lo = mid } else { hi = mid }
        }
        let (_, t) = shoot(0.5 * (lo + hi));
        assert!((hyperbolic_distance(HPoint::I, target) - t).abs() < 1e-6, "{t}");
    }

    #[test]
    fn rotate90_examples() {
        let v = TangentVec::new(HPoint::raw(0.0, 1.0), 1.0, 0.0);
        let r = rotate90(v);
        assert_eq!((r.vx, r.vy), (0.0, 1.0));
        let v = TangentVec::new(HPoint::raw(2.0, 0.3), 0.7, -1.3);
        let r = rotate90(v);
        assert!((metric_norm(&r).unwrap() - metric_norm(&v).unwrap()).abs() < 1e-14);
        assert_eq!(metric_inner(&r, &v).unwrap(), 0.0);
        let rr = rotate90(r);
        assert_eq!((rr.vx, rr.vy), (-v.vx, -v.vy));
    }

    #[test]
    fn inv_log_mean_branches_agree() {
        for &(a, b) in &[(1.0, 1.00009), (0.5, 0.50004), (2.0, 1.9999)] {
            let series = inv_log_mean(a, b);
            let direct = ((b / a) as f64).ln() / (b - a);
            assert!((series - direct).abs() < 1e-10 * series);
        }
        // gradient by central differences in both branches
        for &(a, b) in &[(1.0, 1.00001), (0.7, 1.9)] {
            let (g1, g2) = inv_log_mean_grad(a, b);
            let h = 1e-7;
            let f1 = (inv_log_mean(a + h, b) - inv_log_mean(a - h, b)) / (2.0 * h);
            let f2 = (inv_log_mean(a, b + h) - inv_log_mean(a, b - h)) / (2.0 * h);
            assert!((g1 - f1).abs() < 1e-6, "{g1} {f1}");
            assert!((g2 - f2).abs() < 1e-6, "{g2} {f2}");
        }
    }

    #[test]
    fn parallel_transport_along_vertical_geodesic() {
        // Along the imaginary axis the transvection is z ↦ λz, so vectors scale by λ.
        let v = TangentVec::new(HPoint::raw(0.0, 1.0), 0.3, 0.4);
        let t = parallel_transport(v, HPoint::raw(0.0, 3.0));
        assert!((t.vx - 0.9).abs() < 1e-14 && (t.vy - 1.2).abs() < 1e-14);
        // Norm is preserved in general.
        let v = TangentVec::new(HPoint::raw(0.4, 0.7), -0.2, 0.5);
        let t = parallel_transport(v, HPoint::raw(-1.1, 2.3));
        assert!((metric_norm(&t).unwrap() - metric_norm(&v).unwrap()).abs() < 1e-13);
    }
}
