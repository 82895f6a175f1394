//! The magnetic flow as a second-order ODE in half-plane coordinates.
//!
//! Integration runs in a recentered chart: whenever the state leaves the
//! fundamental octagon it is moved back by a side pairing. The flow is
//! equivariant, so this changes nothing but keeps coordinates bounded. Lifted
//! states are recovered through the accumulated chart isometry.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geometry::{hyperbolic_distance, parallel_transport, HPoint, Isometry, TangentVec};

use super::{DynamicsError, MagneticSystem};

/// A point of the unit tangent bundle scaled to energy `½‖v‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub q: HPoint,
    pub v: TangentVec,
}

impl FlowState {
    pub fn new(q: HPoint, vx: f64, vy: f64) -> Self {
        Self { q, v: TangentVec::new(q, vx, vy) }
    }

    /// State at `q` moving in coordinate direction `angle` with energy `k`.
    pub fn at_energy(q: HPoint, angle: f64, k: f64) -> Self {
        let speed = (2.0 * k).sqrt() * q.y;
        Self::new(q, speed * angle.cos(), speed * angle.sin())
    }

    pub fn energy(&self) -> f64 {
        0.5 * (self.v.vx * self.v.vx + self.v.vy * self.v.vy) / (self.q.y * self.q.y)
    }

    pub fn speed(&self) -> f64 {
        (2.0 * self.energy()).sqrt()
    }

    fn to_array(self) -> [f64; 4] {
        [self.q.x, self.q.y, self.v.vx, self.v.vy]
    }

    fn from_array(s: [f64; 4]) -> Self {
        Self::new(HPoint::raw(s[0], s[1]), s[2], s[3])
    }

    pub fn transformed(&self, g: &Isometry) -> FlowState {
        let w = g.push(self.v);
        FlowState { q: w.base, v: w }
    }
}

/// `(q̇, v̇)` at a state: `q̇ = v`, and the covariant acceleration is
/// `−f·J v` with the conformal Christoffel terms written out.
pub fn ode_rhs(state: &FlowState, sys: &MagneticSystem) -> [f64; 4] {
    rhs(sys, state.to_array())
}

#[inline]
fn rhs(sys: &MagneticSystem, s: [f64; 4]) -> [f64; 4] {
    let [x, y, vx, vy] = s;
    let f = sys.density(HPoint::raw(x, y));
    [vx, vy, 2.0 * vx * vy / y + f * vy, (vy * vy - vx * vx) / y - f * vx]
}

#[inline]
fn axpy(a: [f64; 4], b: [f64; 4], c: f64) -> [f64; 4] {
    [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]]
}

/// RK4 increment `δ` with `s_next = s + δ`.
fn rk4_increment(sys: &MagneticSystem, s: [f64; 4], h: f64) -> [f64; 4] {
    let k1 = rhs(sys, s);
    let k2 = rhs(sys, axpy(s, k1, 0.5 * h));
    let k3 = rhs(sys, axpy(s, k2, 0.5 * h));
    let k4 = rhs(sys, axpy(s, k3, h));
    std::array::from_fn(|i| h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn rk4(sys: &MagneticSystem, s: [f64; 4], h: f64) -> [f64; 4] {
    axpy(s, rk4_increment(sys, s, h), 1.0)
}

/// `E(s + δ) − E(s)` from the increment alone. The O(h) terms cancel
/// analytically, so the result keeps its relative precision even when the
/// change is far below the rounding level of `E`.
fn energy_change(s: [f64; 4], d: [f64; 4]) -> f64 {
    let [_, y, vx, vy] = s;
    let [_, dy, dvx, dvy] = d;
    let v2 = vx * vx + vy * vy;
    let yn = y + dy;
    // |v+δv|²·y² − |v|²·(y+δy)², expanded:
    let num = (2.0 * (vx * dvx + vy * dvy) + dvx * dvx + dvy * dvy) * y * y - v2 * (2.0 * y * dy + dy * dy);
    0.5 * num / (y * y * yn * yn)
}

fn energy_of(s: [f64; 4]) -> f64 {
    0.5 * (s[2] * s[2] + s[3] * s[3]) / (s[1] * s[1])
}

fn transform(g: &Isometry, s: [f64; 4]) -> [f64; 4] {
    FlowState::from_array(s).transformed(g).to_array()
}

/// Fixed-step RK4 stepper with energy projection and chart recentering.
#[derive(Debug, Clone)]
pub struct FlowIntegrator<'a> {
    sys: &'a MagneticSystem,
    dt: f64,
    target_energy: f64,
    project: bool,
    state: [f64; 4],
    /// Maps the lift to the current chart.
    chart: Isometry,
    time: f64,
    cumulative_drift: f64,
    max_step_drift: f64,
}

impl<'a> FlowIntegrator<'a> {
    pub fn new(sys: &'a MagneticSystem, start: FlowState, dt: f64) -> Result<Self, DynamicsError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(DynamicsError::InvalidParameter { name: "dt", value: dt });
        }
        if !(start.q.y > 0.0) {
            return Err(DynamicsError::LeftHalfPlane { time: 0.0 });
        }
        let energy = start.energy();
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(DynamicsError::InvalidParameter { name: "energy", value: energy });
        }
        let mut it = Self {
            sys,
            dt,
            target_energy: energy,
            project: true,
            state: start.to_array(),
            chart: Isometry::IDENTITY,
            time: 0.0,
            cumulative_drift: 0.0,
            max_step_drift: 0.0,
        };
        it.recenter()?;
        Ok(it)
    }

    /// Disables the energy projection (drift then accumulates in the state).
    pub fn without_projection(mut self) -> Self {
        self.project = false;
        self
    }

    fn recenter(&mut self) -> Result<Option<Isometry>, DynamicsError> {
        let q = HPoint::raw(self.state[0], self.state[1]);
        if self.sys.group().contains(q) {
            return Ok(None);
        }
        let (_, _, g) = self.sys.group().reduce_with_isometry(q)?;
        self.state = transform(&g, self.state);
        self.chart = g.compose(&self.chart);
        Ok(Some(g))
    }

    /// Advances by `h` (normally `dt`). Returns the recentering isometry if
    /// one was applied.
    pub fn step_by(&mut self, h: f64) -> Result<Option<Isometry>, DynamicsError> {
        let inc = rk4_increment(self.sys, self.state, h);
        let next = axpy(self.state, inc, 1.0);
        if !(next[1] > 0.0) || next.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::LeftHalfPlane { time: self.time + h });
        }
        let rel = energy_change(self.state, inc) / self.target_energy;
        self.max_step_drift = self.max_step_drift.max(rel.abs());
        self.cumulative_drift += rel;
        self.state = next;
        if self.project {
            let scale = (self.target_energy / energy_of(next)).sqrt();
            self.state[2] *= scale;
            self.state[3] *= scale;
        }
        self.time += h;
        self.recenter()
    }

    pub fn step(&mut self) -> Result<Option<Isometry>, DynamicsError> {
        self.step_by(self.dt)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// State in the current chart (inside or on the fundamental octagon).
    pub fn chart_state(&self) -> FlowState {
        FlowState::from_array(self.state)
    }

    /// State in the universal cover.
    pub fn lifted_state(&self) -> FlowState {
        FlowState::from_array(self.state).transformed(&self.chart.inverse())
    }

    /// Signed sum of the relative energy changes made by the RK4 increments
    /// before projection.
    pub fn cumulative_drift(&self) -> f64 {
        self.cumulative_drift
    }

    pub fn max_step_drift(&self) -> f64 {
        self.max_step_drift
    }
}

/// A sampled orbit in the universal cover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub samples: Vec<FlowState>,
    /// Cumulative signed pre-projection relative energy drift per sample.
    pub drift: Vec<f64>,
    pub max_step_drift: f64,
}

impl Trajectory {
    pub fn total_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn final_state(&self) -> FlowState {
        *self.samples.last().expect("trajectory has at least the initial sample")
    }

    /// Magnitude of the accumulated pre-projection drift at the end.
    pub fn energy_drift(&self) -> f64 {
        self.drift.last().copied().unwrap_or(0.0).abs()
    }

    pub fn length(&self) -> f64 {
        self.samples.windows(2).map(|w| hyperbolic_distance(w[0].q, w[1].q)).sum()
    }

    /// CSV with header `t,x,y,vx,vy,energy_drift`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,vx,vy,energy_drift\n");
        for ((t, s), d) in self.times.iter().zip(&self.samples).zip(&self.drift) {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                t, s.q.x, s.q.y, s.v.vx, s.v.vy, d
            ));
        }
        out
    }

    /// Binary layout: `u64` sample count, then per sample six `f64`
    /// (`t, x, y, vx, vy, drift`), all little-endian.
    pub fn write_binary(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for ((t, s), d) in self.times.iter().zip(&self.samples).zip(&self.drift) {
            for v in [*t, s.q.x, s.q.y, s.v.vx, s.v.vy, *d] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8]) -> Result<Vec<[f64; 6]>, DynamicsError> {
        let bad = || DynamicsError::Format("truncated trajectory binary".into());
        let count = u64::from_le_bytes(bytes.get(..8).ok_or_else(bad)?.try_into().map_err(|_| bad())?) as usize;
        let body = &bytes[8..];
        if body.len() != count * 48 {
            return Err(bad());
        }
        Ok(body
            .chunks_exact(48)
            .map(|c| std::array::from_fn(|i| f64::from_le_bytes(c[i * 8..i * 8 + 8].try_into().expect("8 bytes"))))
            .collect())
    }
}

/// Integrates for `t_end` with steps of about `dt` (the step is shrunk so an
/// integer number of steps lands on `t_end`), recording every `stride`-th
/// sample and the last one.
pub fn integrate_sampled(
    state: FlowState,
    sys: &MagneticSystem,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory, DynamicsError> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(DynamicsError::InvalidParameter { name: "t_end", value: t_end });
    }
    if !(dt > 0.0) {
        return Err(DynamicsError::InvalidParameter { name: "dt", value: dt });
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut it = FlowIntegrator::new(sys, state, h)?;
    let stride = stride.max(1);
    let mut traj = Trajectory {
        dt: h,
        times: vec![0.0],
        samples: vec![it.lifted_state()],
        drift: vec![0.0],
        max_step_drift: 0.0,
    };
    for i in 1..=steps {
        it.step()?;
        if i % stride == 0 || i == steps {
            traj.times.push(i as f64 * h);
            traj.samples.push(it.lifted_state());
            traj.drift.push(it.cumulative_drift());
        }
    }
    traj.max_step_drift = it.max_step_drift();
    Ok(traj)
}

/// Integrates for `t_end`, recording every step.
pub fn integrate(state: FlowState, sys: &MagneticSystem, t_end: f64, dt: f64) -> Result<Trajectory, DynamicsError> {
    integrate_sampled(state, sys, t_end, dt, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureOptions {
    pub dt: f64,
    pub tol_position: f64,
    pub tol_velocity: f64,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self { dt: 2e-3, tol_position: 1e-6, tol_velocity: 1e-6 }
    }
}

/// A closed orbit detected by [`closure_check_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Closure {
    pub period: f64,
    pub position_gap: f64,
    pub velocity_gap: f64,
    /// Whether the orbit closes in the universal cover (contractible).
    pub contractible: bool,
}

/// Prime period of the orbit through `state` on the closed surface, if it
/// returns within `horizon`.
pub fn closure_check(state: FlowState, sys: &MagneticSystem, horizon: f64) -> Result<Option<f64>, DynamicsError> {
    Ok(closure_check_with(state, sys, horizon, ClosureOptions::default())?.map(|c| c.period))
}

struct Target {
    q: HPoint,
    v: TangentVec,
    deck: Isometry,
}

fn gaps(target: &Target, s: [f64; 4]) -> (f64, f64) {
    let q = HPoint::raw(s[0], s[1]);
    let pos = hyperbolic_distance(q, target.q);
    let moved = parallel_transport(target.v, q);
    let vel = (s[2] - moved.vx).hypot(s[3] - moved.vy) / q.y;
    (pos, vel)
}

/// Closure detection with explicit tolerances. Returns the first time at
/// which the phase-space distance to the start (modulo the deck group)
/// attains a local minimum below tolerance.
pub fn closure_check_with(
    state: FlowState,
    sys: &MagneticSystem,
    horizon: f64,
    opts: ClosureOptions,
) -> Result<Option<Closure>, DynamicsError> {
    let mut it = FlowIntegrator::new(sys, state, opts.dt)?;
    let start = it.chart_state();
    let start_chart = it.chart;
    let group = sys.group();
    // Images of the start near the octagon: only those can be hit by a
    // chart state.
    let targets: Vec<Target> = group
        .ball(2)
        .into_iter()
        .filter_map(|(w, g)| {
            let moved = start.transformed(&g);
            (w.is_empty() || group.interior_margin(moved.q) > -1.0)
                .then_some(Target { q: moved.q, v: moved.v, deck: g })
        })
        .collect();
    let screen = 10.0 * opts.dt * start.speed() + 1e3 * opts.tol_position;
    let d2 = |s: [f64; 4]| -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, t) in targets.iter().enumerate() {
            let q = HPoint::raw(s[0], s[1]);
            if hyperbolic_distance(q, t.q) > screen {
                continue;
            }
            let (p, v) = gaps(t, s);
            let val = p * p + v * v;
            if val < best.0 {
                best = (val, i);
            }
        }
        best
    };

    // History of the last two chart states (kept in the current chart).
    let mut prev2: Option<[f64; 4]> = None;
    let mut prev1 = it.state;
    let mut dprev2 = f64::INFINITY;
    let mut dprev1 = 0.0;
    let mut t_prev1 = 0.0;
    let mut left_start = false;
    let steps = (horizon / opts.dt).ceil() as usize;
    for _ in 0..steps {
        if let Some(g) = it.step()? {
            prev1 = transform(&g, prev1);
            if let Some(p) = prev2.as_mut() {
                *p = transform(&g, *p);
            }
        }
        let (dcur, _) = d2(it.state);
        if !left_start {
            left_start = dcur.sqrt() > 0.5 * screen;
        } else if dprev1 < dprev2 && dprev1 <= dcur && dprev1.sqrt() < screen {
            if let Some(base) = prev2 {
                if let Some(c) = refine(&it, base, t_prev1 - opts.dt, 2.0 * opts.dt, &targets, &d2, opts, start_chart)? {
                    return Ok(Some(c));
                }
            }
        }
        prev2 = Some(prev1);
        prev1 = it.state;
        dprev2 = dprev1;
        dprev1 = dcur;
        t_prev1 = it.time();
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    it: &FlowIntegrator<'_>,
    base: [f64; 4],
    t_base: f64,
    span: f64,
    targets: &[Target],
    d2: &impl Fn([f64; 4]) -> (f64, usize),
    opts: ClosureOptions,
    start_chart: Isometry,
) -> Result<Option<Closure>, DynamicsError> {
    let sys = it.sys;
    let at = |tau: f64| {
        let mut s = rk4(sys, base, tau);
        let scale = (it.target_energy / energy_of(s)).sqrt();
        s[2] *= scale;
        s[3] *= scale;
        s
    };
    // Golden-section search for the minimum of the squared gap.
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, span);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = d2(at(c)).0;
    let mut fd = d2(at(d)).0;
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = d2(at(c)).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = d2(at(d)).0;
        }
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    let tau = 0.5 * (a + b);
    let s = at(tau);
    let (_, idx) = d2(s);
    if idx == usize::MAX {
        return Ok(None);
    }
    let (pos, vel) = gaps(&targets[idx], s);
    if pos < opts.tol_position && vel < opts.tol_velocity {
        // The lift returns to its start iff the matched deck image equals the
        // chart change accumulated since the start.
        let moved = it.chart.compose(&start_chart.inverse());
        let contractible = targets[idx].deck.projective_distance(&moved) < 1e-6;
        return Ok(Some(Closure { period: t_base + tau, position_gap: pos, velocity_gap: vel, contractible }));
    }
    Ok(None)
}
