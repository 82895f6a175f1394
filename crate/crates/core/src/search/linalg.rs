//! Flat-vector views of loops, the H¹ preconditioner, and the banded
//! finite-difference Hessian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::action::{action_gradient, action_value, ActionConvention, ActionError, ActionGradient, LoopPath};
use crate::dynamics::MagneticSystem;
use crate::geometry::HPoint;

/// Layout `[x_0, y_0, …, x_{N−1}, y_{N−1}, T]`.
pub(crate) fn pack(lp: &LoopPath) -> DVector<f64> {
    let n = lp.len();
    let mut z = DVector::zeros(2 * n + 1);
    for (i, p) in lp.points.iter().enumerate() {
        z[2 * i] = p.x;
        z[2 * i + 1] = p.y;
    }
    z[2 * n] = lp.period;
    z
}

pub(crate) fn unpack(template: &LoopPath, z: &DVector<f64>) -> LoopPath {
    let n = template.len();
    LoopPath {
        points: (0..n).map(|i| HPoint::raw(z[2 * i], z[2 * i + 1])).collect(),
        period: z[2 * n],
        fractions: template.fractions.clone(),
        class: template.class.clone(),
    }
}

pub(crate) fn flatten(g: &ActionGradient) -> DVector<f64> {
    let n = g.points.len();
    let mut v = DVector::zeros(2 * n + 1);
    for (i, p) in g.points.iter().enumerate() {
        v[2 * i] = p[0];
        v[2 * i + 1] = p[1];
    }
    v[2 * n] = g.d_period;
    v
}

/// `S_k` and its evaluation context.
pub(crate) struct Objective<'a> {
    pub sys: &'a MagneticSystem,
    pub k: f64,
    pub convention: &'a ActionConvention,
}

impl Objective<'_> {
    pub fn value(&self, lp: &LoopPath) -> Result<f64, ActionError> {
        action_value(lp, self.sys, self.k, self.convention)
    }

    pub fn gradient(&self, lp: &LoopPath) -> Result<(f64, ActionGradient), ActionError> {
        action_gradient(lp, self.sys, self.k, self.convention)
    }
}

/// Solves the symmetric cyclic tridiagonal system with diagonal `diag`,
/// off-diagonal `off[i]` between `i` and `i+1 (mod n)`.
fn cyclic_solve(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let thomas = |b: &[f64], r: &[f64]| -> Vec<f64> {
        // Tridiagonal with sub = super = off[0..n−1].
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = off[0] / b[0];
        d[0] = r[0] / b[0];
        for i in 1..n {
            let sub = off[i - 1];
            let m = b[i] - sub * c[i - 1];
            c[i] = if i + 1 < n { off[i] / m } else { 0.0 };
            d[i] = (r[i] - sub * d[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    };
    // Sherman–Morrison for the corner entries off[n−1].
    let corner = off[n - 1];
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= corner * corner / gamma;
    let x = thomas(&b, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner;
    let zv = thomas(&b, &u);
    let fact = (x[0] + corner * x[n - 1] / gamma) / (1.0 + zv[0] + corner * zv[n - 1] / gamma);
    x.iter().zip(&zv).map(|(a, b)| a - fact * b).collect()
}

/// `P⁻¹g` for the H¹ metric matched to the kinetic Hessian: per coordinate
/// `Σ (δq_{i+1} − δq_i)²/(h_i y_i y_{i+1}) + Σ h̄_i δq_i²/(T² y_i²)`, and the
/// exact second derivative `2K/T²` in the period.
pub(crate) fn precondition(lp: &LoopPath, kinetic: f64, g: &DVector<f64>) -> DVector<f64> {
    let n = lp.len();
    let t = lp.period;
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (lp.points[i], lp.points[(i + 1) % n]);
            -1.0 / (lp.step(i) * a.y * b.y)
        })
        .collect();
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let hbar = 0.5 * (lp.step(i) + lp.step((i + n - 1) % n));
            -w[i] - w[(i + n - 1) % n] + hbar / (t * t * lp.points[i].y.powi(2))
        })
        .collect();
    let gx: Vec<f64> = (0..n).map(|i| g[2 * i]).collect();
    let gy: Vec<f64> = (0..n).map(|i| g[2 * i + 1]).collect();
    let (dx, dy) = (cyclic_solve(&diag, &w, &gx), cyclic_solve(&diag, &w, &gy));
    let mut out = DVector::zeros(2 * n + 1);
    for i in 0..n {
        out[2 * i] = dx[i];
        out[2 * i + 1] = dy[i];
    }
    let curvature = (2.0 * kinetic / (t * t)).max(1e-12);
    out[2 * n] = g[2 * n] / curvature;
    out
}

/// Hessian of `S_k` in raw coordinates by central differences of the exact
/// gradient. Point gradients only couple neighbors, so points three apart
/// are perturbed together; the period column is done separately.
pub(crate) fn hessian(obj: &Objective, lp: &LoopPath) -> Result<DMatrix<f64>, ActionError> {
    let n = lp.len();
    let dim = 2 * n + 1;
    let z0 = pack(lp);
    let mut h = DMatrix::zeros(dim, dim);
    // Colors: i mod 3 on the bulk, singletons for the tail that would wrap.
    let bulk = n - n % 3;
    let mut colors: Vec<Vec<usize>> = (0..3).map(|r| (r..bulk).step_by(3).collect()).collect();
    colors.extend((bulk..n).map(|i| vec![i]));
    if n < 6 {
        colors = (0..n).map(|i| vec![i]).collect();
    }
    let grad_at = |z: &DVector<f64>| -> Result<DVector<f64>, ActionError> { Ok(flatten(&obj.gradient(&unpack(lp, z))?.1)) };
    for group in &colors {
        for axis in 0..2 {
            let mut zp = z0.clone();
            let mut zm = z0.clone();
            let eps: Vec<f64> = group.iter().map(|i| 1e-5 * lp.points[*i].y).collect();
            for (i, e) in group.iter().zip(&eps) {
                zp[2 * i + axis] += e;
                zm[2 * i + axis] -= e;
            }
            let diff = grad_at(&zp)? - grad_at(&zm)?;
            for (i, e) in group.iter().zip(&eps) {
                let col = 2 * i + axis;
                for j in [(*i + n - 1) % n, *i, (*i + 1) % n] {
                    for ax in 0..2 {
                        h[(2 * j + ax, col)] = diff[2 * j + ax] / (2.0 * e);
                    }
                }
            }
        }
    }
    let e = 1e-6 * lp.period;
    let mut zp = z0.clone();
    let mut zm = z0.clone();
    zp[2 * n] += e;
    zm[2 * n] -= e;
    let diff = grad_at(&zp)? - grad_at(&zm)?;
    for j in 0..dim {
        h[(j, 2 * n)] = diff[j] / (2.0 * e);
    }
    for j in 0..2 * n {
        h[(2 * n, j)] = h[(j, 2 * n)];
    }
    Ok(0.5 * (&h + h.transpose()))
}

/// Coordinate scaling that makes the Hessian dimensionless: `y_i` for
/// points, `T` for the period.
pub(crate) fn scaling(lp: &LoopPath) -> DVector<f64> {
    let n = lp.len();
    let mut d = DVector::zeros(2 * n + 1);
    for (i, p) in lp.points.iter().enumerate() {
        d[2 * i] = p.y;
        d[2 * i + 1] = p.y;
    }
    d[2 * n] = lp.period;
    d
}

/// Unit vector along the time-shift direction in scaled coordinates.
pub(crate) fn shift_mode(lp: &LoopPath) -> DVector<f64> {
    let n = lp.len();
    let mut v = DVector::zeros(2 * n + 1);
    for i in 0..n {
        let next = lp.point(i + 1);
        let prev = if i == 0 { lp.class.deck().inverse().apply(lp.points[n - 1]) } else { lp.points[i - 1] };
        let y = lp.points[i].y;
        v[2 * i] = (next.x - prev.x) / y;
        v[2 * i + 1] = (next.y - prev.y) / y;
    }
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

/// Eigen-decomposition of the scaled Hessian.
pub(crate) fn scaled_eigen(h: &DMatrix<f64>, d: &DVector<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let hs = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| d[i] * h[(i, j)] * d[j]);
    SymmetricEigen::new(hs)
}
