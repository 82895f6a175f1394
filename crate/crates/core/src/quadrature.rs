//! Gauss–Legendre rules and signed area quadrature over hyperbolic polygons.

use crate::geometry::HPoint;

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Eight-point Gauss–Legendre rule on `[0, 1]` as `(node, weight)` pairs.
pub fn gl8_unit() -> impl Iterator<Item = (f64, f64)> + Clone {
    GL8_NODES.iter().zip(GL8_WEIGHTS.iter()).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
}

/// `∫∫_Δ g(x, y)/y² dx dy` over the coordinate triangle `(c, a, b)`, signed
/// by orientation. Collapsed-square Gauss rule, exact for polynomials of
/// degree 15 in the collapsed coordinates.
pub fn triangle_flux(c: HPoint, a: HPoint, b: HPoint, g: &impl Fn(HPoint) -> f64) -> f64 {
    let ex = (a.x - c.x, a.y - c.y);
    let fx = (b.x - a.x, b.y - a.y);
    let jac = ex.0 * fx.1 - ex.1 * fx.0;
    if jac == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (u, wu) in gl8_unit() {
        let mut inner = 0.0;
        for (v, wv) in gl8_unit() {
            let x = c.x + u * (ex.0 + v * fx.0);
            let y = c.y + u * (ex.1 + v * fx.1);
            inner += wv * g(HPoint::raw(x, y)) / (y * y);
        }
        acc += wu * u * inner;
    }
    acc * jac
}

/// Radial pieces per fan wedge: one triangle at the apex and trapezoids.
const FAN_LEVELS: usize = 4;

/// Flux of `g·μ` through the fan over a closed polygon from `apex`.
pub fn fan_flux(apex: HPoint, polygon: &[HPoint], g: &impl Fn(HPoint) -> f64) -> f64 {
    let n = polygon.len();
    (0..n).map(|i| wedge_flux(apex, polygon[i], polygon[(i + 1) % n], g)).sum()
}

/// Flux through the triangle `(c, a, b)`, split radially into pieces.
pub fn wedge_flux(c: HPoint, a: HPoint, b: HPoint, g: &impl Fn(HPoint) -> f64) -> f64 {
    let at = |p: HPoint, l: f64| HPoint::raw(c.x + l * (p.x - c.x), c.y + l * (p.y - c.y));
    let l1 = 1.0 / FAN_LEVELS as f64;
    let mut acc = triangle_flux(c, at(a, l1), at(b, l1), g);
    for j in 1..FAN_LEVELS {
        let (l0, l1) = (j as f64 / FAN_LEVELS as f64, (j + 1) as f64 / FAN_LEVELS as f64);
        acc += quad_flux(at(a, l0), at(a, l1), at(b, l1), at(b, l0), g);
    }
    acc
}

/// `∫∫ g/y²` over the bilinear coordinate quadrilateral `p00, p10, p11, p01`
/// (counterclockwise gives positive area), tensor Gauss rule.
pub fn quad_flux(p00: HPoint, p10: HPoint, p11: HPoint, p01: HPoint, g: &impl Fn(HPoint) -> f64) -> f64 {
    let mut acc = 0.0;
    for (u, wu) in gl8_unit() {
        for (v, wv) in gl8_unit() {
            let b00 = (1.0 - u) * (1.0 - v);
            let b10 = u * (1.0 - v);
            let b11 = u * v;
            let b01 = (1.0 - u) * v;
            let x = b00 * p00.x + b10 * p10.x + b11 * p11.x + b01 * p01.x;
            let y = b00 * p00.y + b10 * p10.y + b11 * p11.y + b01 * p01.y;
            let xu = (1.0 - v) * (p10.x - p00.x) + v * (p11.x - p01.x);
            let yu = (1.0 - v) * (p10.y - p00.y) + v * (p11.y - p01.y);
            let xv = (1.0 - u) * (p01.x - p00.x) + u * (p11.x - p10.x);
            let yv = (1.0 - u) * (p01.y - p00.y) + u * (p11.y - p10.y);
            let jac = xu * yv - yu * xv;
            acc += wu * wv * jac * g(HPoint::raw(x, y)) / (y * y);
        }
    }
    acc
}

/// `∫∫ g/y²` over the ruled patch `P(u, v) = (1 − u)·L₀(v) + u·L₁(v)`,
/// `u, v ∈ [0, 1]`, signed by the orientation of `(∂_u, ∂_v)`. Each side
/// curve returns its point and derivative.
pub fn ruled_flux(
    side0: &impl Fn(f64) -> (HPoint, [f64; 2]),
    side1: &impl Fn(f64) -> (HPoint, [f64; 2]),
    g: &impl Fn(HPoint) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for (v, wv) in gl8_unit() {
        let (a, da) = side0(v);
        let (b, db) = side1(v);
        let pu = [b.x - a.x, b.y - a.y];
        for (u, wu) in gl8_unit() {
            let x = a.x + u * pu[0];
            let y = a.y + u * pu[1];
            let pv = [(1.0 - u) * da[0] + u * db[0], (1.0 - u) * da[1] + u * db[1]];
            let jac = pu[0] * pv[1] - pu[1] * pv[0];
            acc += wu * wv * jac * g(HPoint::raw(x, y)) / (y * y);
        }
    }
    acc
}
