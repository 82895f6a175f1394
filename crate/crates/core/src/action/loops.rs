//! Discretized loops with free period.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::dynamics::{FlowState, Trajectory};
use crate::geometry::{hyperbolic_distance, HPoint, Isometry, Word};

use super::ActionError;

/// Smallest number of points a loop may carry.
pub const MIN_POINTS: usize = 8;

/// Free homotopy class of a loop, recorded through the deck transformation
/// that closes its lift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoopClass {
    Contractible,
    Deck { word: Word, deck: Isometry },
}

impl LoopClass {
    pub fn deck(&self) -> Isometry {
        match self {
            LoopClass::Contractible => Isometry::IDENTITY,
            LoopClass::Deck { deck, .. } => *deck,
        }
    }

    pub fn is_contractible(&self) -> bool {
        matches!(self, LoopClass::Contractible)
    }

    pub fn label(&self) -> String {
        match self {
            LoopClass::Contractible => "contractible".into(),
            LoopClass::Deck { word, .. } => word.to_string(),
        }
    }

    pub fn iterate(&self, n: usize) -> LoopClass {
        match self {
            LoopClass::Contractible => LoopClass::Contractible,
            LoopClass::Deck { word, deck } => LoopClass::Deck {
                word: Word(word.0.iter().cycle().take(word.len() * n).copied().collect()),
                deck: deck.pow(n as u32),
            },
        }
    }
}

/// A loop `(x, T)`: lifted points `q_0 … q_{N−1}` joined by straight
/// coordinate segments, closed by `q_N = deck·q_0`, with per-segment time
/// fractions `τ_i` summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPath {
    pub points: Vec<HPoint>,
    pub period: f64,
    pub fractions: Vec<f64>,
    pub class: LoopClass,
}

impl LoopPath {
    /// Contractible loop with uniform time steps.
    pub fn new(points: Vec<HPoint>, period: f64) -> Result<Self, ActionError> {
        let n = points.len();
        Self::with_fractions(points, period, vec![1.0 / n as f64; n], LoopClass::Contractible)
    }

    pub fn with_class(points: Vec<HPoint>, period: f64, class: LoopClass) -> Result<Self, ActionError> {
        let n = points.len();
        Self::with_fractions(points, period, vec![1.0 / n as f64; n], class)
    }

    pub fn with_fractions(
        points: Vec<HPoint>,
        period: f64,
        fractions: Vec<f64>,
        class: LoopClass,
    ) -> Result<Self, ActionError> {
        let l = Self { points, period, fractions, class };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<(), ActionError> {
        let n = self.points.len();
        if n < MIN_POINTS {
            return Err(ActionError::TooFewPoints { n });
        }
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(ActionError::BadPeriod { period: self.period });
        }
        if self.fractions.len() != n || self.fractions.iter().any(|t| !(*t > 0.0)) {
            return Err(ActionError::BadFractions);
        }
        let total: f64 = self.fractions.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ActionError::BadFractions);
        }
        if let Some(p) = self.points.iter().find(|p| !(p.y > 0.0) || !p.x.is_finite() || !p.y.is_finite()) {
            return Err(ActionError::OutsideHalfPlane { x: p.x, y: p.y });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `q_i` for `0 ≤ i ≤ N`, with `q_N = deck·q_0`.
    pub fn point(&self, i: usize) -> HPoint {
        let n = self.points.len();
        if i == n {
            self.class.deck().apply(self.points[0])
        } else {
            self.points[i]
        }
    }

    /// Time step of segment `i`.
    pub fn step(&self, i: usize) -> f64 {
        self.period * self.fractions[i]
    }

    /// Total hyperbolic length of the polygon, measured along geodesics
    /// between consecutive points.
    pub fn length(&self) -> f64 {
        (0..self.len()).map(|i| hyperbolic_distance(self.point(i), self.point(i + 1))).sum()
    }

    pub fn max_edge(&self) -> f64 {
        (0..self.len()).map(|i| hyperbolic_distance(self.point(i), self.point(i + 1))).fold(0.0, f64::max)
    }

    /// Constant loop at `p` with period `t`.
    pub fn constant(p: HPoint, period: f64, n: usize) -> Result<Self, ActionError> {
        Self::new(vec![p; n], period)
    }

    /// Hyperbolic circle of radius `r` about `center` traversed once,
    /// counterclockwise for `orientation > 0`, uniformly in arclength.
    pub fn circle(center: HPoint, r: f64, orientation: f64, period: f64, n: usize) -> Result<Self, ActionError> {
        // Uniform hyperbolic arclength is uniform in the disk-chart angle.
        let c = center.to_complex();
        let pts = (0..n)
            .map(|j| {
                let a = orientation.signum() * 2.0 * PI * j as f64 / n as f64;
                let zeta = Complex64::from_polar((r / 2.0).tanh(), a);
                HPoint::from_complex((c - c.conj() * zeta) / (1.0 - zeta))
            })
            .collect();
        Self::new(pts, period)
    }

    /// Loop sampled from a closed trajectory (the last sample, equal to the
    /// first, is dropped).
    pub fn from_trajectory(tr: &Trajectory, every: usize) -> Result<Self, ActionError> {
        let every = every.max(1);
        let m = tr.samples.len() - 1;
        if m % every != 0 {
            return Err(ActionError::BadFractions);
        }
        let pts: Vec<HPoint> = tr.samples[..m].iter().step_by(every).map(|s| s.q).collect();
        Self::new(pts, tr.total_time())
    }

    /// Finite-difference velocity at point `i` (centered), rescaled to
    /// energy `k`.
    pub fn velocity_at(&self, i: usize, k: f64) -> FlowState {
        let n = self.len();
        let next = self.point(i + 1);
        let prev = if i == 0 { self.class.deck().inverse().apply(self.point(n - 1)) } else { self.point(i - 1) };
        let q = self.point(i);
        let (vx, vy) = (next.x - prev.x, next.y - prev.y);
        let scale = (2.0 * k).sqrt() * q.y / vx.hypot(vy);
        FlowState::new(q, vx * scale, vy * scale)
    }

    /// The loop with reversed time.
    pub fn reversed(&self) -> Self {
        let n = self.len();
        let g = self.class.deck();
        // Reversed lift: q_N, q_{N−1}, …, q_1, closed by the inverse deck.
        let pts: Vec<HPoint> = (0..n).map(|j| self.point(n - j)).collect();
        let pts: Vec<HPoint> = pts.iter().map(|p| g.inverse().apply(*p)).collect();
        let fractions = (0..n).map(|j| self.fractions[n - 1 - j]).collect();
        let class = match &self.class {
            LoopClass::Contractible => LoopClass::Contractible,
            LoopClass::Deck { word, deck } => LoopClass::Deck { word: word.inverse(), deck: deck.inverse() },
        };
        Self { points: pts, period: self.period, fractions, class }
    }

    /// The loop starting at point `shift` instead of `0`.
    pub fn rotated(&self, shift: usize) -> Self {
        let n = self.len();
        let shift = shift % n;
        let g = self.class.deck();
        let points = (0..n)
            .map(|j| {
                let i = j + shift;
                if i < n {
                    self.points[i]
                } else {
                    g.apply(self.points[i - n])
                }
            })
            .collect::<Vec<_>>();
        // Re-express in the lift so that the first point is unchanged class-wise.
        let fractions = (0..n).map(|j| self.fractions[(j + shift) % n]).collect();
        Self { points, period: self.period, fractions, class: self.class.clone() }
    }

    /// Applies an isometry to every point; contractible loops stay closed.
    pub fn transformed(&self, g: &Isometry) -> Self {
        let class = match &self.class {
            LoopClass::Contractible => LoopClass::Contractible,
            LoopClass::Deck { word, deck } => {
                LoopClass::Deck { word: word.clone(), deck: g.compose(deck).compose(&g.inverse()) }
            }
        };
        Self { points: self.points.iter().map(|p| g.apply(*p)).collect(), period: self.period, fractions: self.fractions.clone(), class }
    }

    /// Resamples to `m` points uniformly in time (geodesic interpolation).
    pub fn resampled(&self, m: usize) -> Result<Self, ActionError> {
        let n = self.len();
        let mut cum = vec![0.0; n + 1];
        for i in 0..n {
            cum[i + 1] = cum[i] + self.fractions[i];
        }
        let mut pts = Vec::with_capacity(m);
        let mut seg = 0;
        for j in 0..m {
            let t = j as f64 / m as f64;
            while seg + 1 < n && cum[seg + 1] <= t {
                seg += 1;
            }
            let frac = ((t - cum[seg]) / self.fractions[seg]).clamp(0.0, 1.0);
            pts.push(geodesic_lerp(self.point(seg), self.point(seg + 1), frac));
        }
        Self::with_class(pts, self.period, self.class.clone())
    }

    /// Reparametrizes so that every segment has equal hyperbolic length,
    /// keeping the number of points and the uniform time grid.
    pub fn arclength_reparametrized(&self) -> Result<Self, ActionError> {
        let n = self.len();
        let lens: Vec<f64> = (0..n).map(|i| hyperbolic_distance(self.point(i), self.point(i + 1))).collect();
        let total: f64 = lens.iter().sum();
        if !(total > 0.0) {
            return Ok(self.clone());
        }
        let mut pts = Vec::with_capacity(n);
        let mut seg = 0;
        let mut acc = 0.0;
        for j in 0..n {
            let target = total * j as f64 / n as f64;
            while seg + 1 < n && acc + lens[seg] < target {
                acc += lens[seg];
                seg += 1;
            }
            let frac = if lens[seg] > 0.0 { ((target - acc) / lens[seg]).clamp(0.0, 1.0) } else { 0.0 };
            pts.push(geodesic_lerp(self.point(seg), self.point(seg + 1), frac));
        }
        Self::with_fractions(pts, self.period, vec![1.0 / n as f64; n], self.class.clone())
    }
}

/// Point at fraction `t` along the geodesic from `a` to `b`.
pub fn geodesic_lerp(a: HPoint, b: HPoint, t: f64) -> HPoint {
    if t == 0.0 {
        return a;
    }
    if t == 1.0 {
        return b;
    }
    let w = crate::geometry::to_disk_at(a, b);
    let r = w.norm();
    if r == 0.0 {
        return a;
    }
    let d = 2.0 * r.atanh();
    let zeta = w * ((t * d / 2.0).tanh() / r);
    let c = a.to_complex();
    let z = (c - c.conj() * zeta) / (num_complex::Complex64::new(1.0, 0.0) - zeta);
    HPoint::from_complex(z)
}

/// `ψⁿ(x, T) = (xⁿ, nT)`: the loop traversed `n` times.
pub fn iterate_loop(lp: &LoopPath, n: usize) -> Result<LoopPath, ActionError> {
    if n == 0 {
        return Err(ActionError::ZeroIterate);
    }
    if n == 1 {
        return Ok(lp.clone());
    }
    let g = lp.class.deck();
    let mut pts = Vec::with_capacity(lp.len() * n);
    let mut h = Isometry::IDENTITY;
    for j in 0..n {
        if j == 0 {
            pts.extend_from_slice(&lp.points);
        } else {
            pts.extend(lp.points.iter().map(|p| h.apply(*p)));
        }
        h = h.compose(&g);
    }
    let raw: Vec<f64> = lp.fractions.iter().cycle().take(lp.len() * n).copied().collect();
    let total: f64 = raw.iter().sum();
    let fractions = raw.iter().map(|t| t / total).collect();
    LoopPath::with_fractions(pts, lp.period * n as f64, fractions, lp.class.iterate(n))
}

/// Time concatenation of two contractible loops with a common base point.
pub fn concatenate(a: &LoopPath, b: &LoopPath) -> Result<LoopPath, ActionError> {
    if !a.class.is_contractible() || !b.class.is_contractible() {
        return Err(ActionError::NotContractible);
    }
    let gap = hyperbolic_distance(a.points[0], b.points[0]);
    if gap > 1e-12 {
        return Err(ActionError::BasepointMismatch { gap });
    }
    let t = a.period + b.period;
    let mut pts = a.points.clone();
    pts.extend_from_slice(&b.points);
    let fractions: Vec<f64> = a
        .fractions
        .iter()
        .map(|f| f * a.period / t)
        .chain(b.fractions.iter().map(|f| f * b.period / t))
        .collect();
    let total: f64 = fractions.iter().sum();
    let fractions = fractions.iter().map(|f| f / total).collect();
    LoopPath::with_fractions(pts, t, fractions, LoopClass::Contractible)
}
