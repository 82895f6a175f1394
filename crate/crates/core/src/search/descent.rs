//! Preconditioned descent to local minimizers, Newton refinement, the
//! discrete second variation, and the Palais–Smale classifier.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::action::{action_sk, kinetic_energy, ActionConvention, LoopPath};
use crate::dynamics::MagneticSystem;

use super::linalg::{flatten, hessian, pack, precondition, scaled_eigen, scaling, shift_mode, unpack, Objective};
use super::{CriticalKind, CriticalPoint, SearchError, SearchOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsClass {
    /// Bounded period, gradient driven below tolerance.
    Converged,
    /// Contractible loop collapsing: period at the floor, action near 0.
    Shrinking,
    /// Period running to the cap.
    Escaping,
    /// Non-contractible loop with period at the floor but bounded action,
    /// which the energy estimate forbids.
    Inconsistent,
    /// Stopped for another reason (iteration cap, stalled line search).
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub value: f64,
    pub period: f64,
    pub grad_norm: f64,
    pub max_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentTrace {
    pub k: f64,
    pub contractible: bool,
    pub period_floor: f64,
    pub period_cap: f64,
    pub converged: bool,
    pub entries: Vec<TraceEntry>,
}

/// Classifies the end of an optimizer run.
pub fn palais_smale_monitor(trace: &DescentTrace) -> PsClass {
    let Some(last) = trace.entries.last() else { return PsClass::Undecided };
    if last.period >= trace.period_cap {
        return PsClass::Escaping;
    }
    if last.period <= trace.period_floor * (1.0 + 1e-9) {
        if trace.contractible {
            return if last.value.abs() <= 10.0 * trace.k * trace.period_floor {
                PsClass::Shrinking
            } else {
                PsClass::Undecided
            };
        }
        // Short non-contractible loops have kinetic energy at least
        // ℓ²/(2T); the action must blow up as the period collapses.
        let third = &trace.entries[trace.entries.len() * 2 / 3..];
        let first = third.first().unwrap_or(last);
        let rising = last.value > first.value && last.value * last.period > first.value * first.period * 0.5;
        return if rising { PsClass::Escaping } else { PsClass::Inconsistent };
    }
    if trace.converged {
        PsClass::Converged
    } else {
        PsClass::Undecided
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentReport {
    pub status: PsClass,
    pub value: f64,
    pub final_loop: LoopPath,
    pub critical: Option<CriticalPoint>,
    pub trace: DescentTrace,
}

fn valid(lp: &LoopPath) -> bool {
    lp.period.is_finite() && lp.points.iter().all(|p| p.y > 0.0 && p.x.is_finite() && p.y.is_finite())
}

/// One preconditioned gradient step with Armijo backtracking. The period
/// stays within `[period_floor, period_cap]`. Returns the new loop, its
/// value and the step size to try next, or `None` when no decrease exists.
pub(crate) fn armijo_step(
    obj: &Objective,
    lp: &LoopPath,
    value: f64,
    grad: &crate::action::ActionGradient,
    step: f64,
    opts: &SearchOptions,
) -> Result<Option<(LoopPath, f64, f64)>, SearchError> {
    let g = flatten(grad);
    let mut d = -precondition(lp, kinetic_energy(lp), &g);
    let n = lp.len();
    if lp.period <= opts.period_floor && d[2 * n] < 0.0 {
        d[2 * n] = 0.0;
    }
    let slope = g.dot(&d);
    if !(slope < 0.0) {
        return Ok(None);
    }
    let z = pack(lp);
    let mut step = (step * 2.0).min(1.0);
    while step > 1e-14 {
        let mut zn = &z + step * &d;
        zn[2 * n] = zn[2 * n].clamp(opts.period_floor, opts.period_cap);
        let cand = unpack(lp, &zn);
        if valid(&cand) {
            if let Ok(v) = obj.value(&cand) {
                if v <= value + 1e-4 * step * slope {
                    return Ok(Some((cand, v, step)));
                }
            }
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Gradient descent in the H¹ metric with Armijo backtracking, followed by
/// Newton refinement once close.
pub fn find_local_min(
    seed: &LoopPath,
    sys: &MagneticSystem,
    k: f64,
    convention: &ActionConvention,
    opts: &SearchOptions,
) -> Result<DescentReport, SearchError> {
    if !(k > 0.0) {
        return Err(SearchError::Invalid(format!("energy must be positive, got {k}")));
    }
    let obj = Objective { sys, k, convention };
    let mut lp = seed.clone();
    lp.period = lp.period.clamp(opts.period_floor, opts.period_cap);
    let mut trace = DescentTrace {
        k,
        contractible: lp.class.is_contractible(),
        period_floor: opts.period_floor,
        period_cap: opts.period_cap,
        converged: false,
        entries: Vec::new(),
    };
    let mut step = 1.0;
    let mut at_floor = 0usize;
    let mut status = None;
    for iteration in 0..opts.max_iters {
        let (value, grad) = obj.gradient(&lp)?;
        let defect = grad.defects(&lp).into_iter().fold(0.0, f64::max);
        let gnorm = grad.norm(&lp);
        trace.entries.push(TraceEntry { iteration, value, period: lp.period, grad_norm: gnorm, max_defect: defect });
        if defect < opts.newton_switch && grad.d_period.abs() < opts.newton_switch {
            break;
        }
        if lp.period >= opts.period_cap {
            status = Some(PsClass::Escaping);
            break;
        }
        if at_floor >= 50 {
            break;
        }
        let Some((cand, v, next)) = armijo_step(&obj, &lp, value, &grad, step, opts)? else { break };
        step = next;
        assert!(v <= value, "descent increased the action");
        lp = cand;
        at_floor = if lp.period <= opts.period_floor * (1.0 + 1e-12) { at_floor + 1 } else { 0 };
        if opts.reparam_every > 0 && iteration % opts.reparam_every == opts.reparam_every - 1 {
            if let Ok(r) = lp.arclength_reparametrized() {
                if obj.value(&r).is_ok_and(|rv| rv <= v) {
                    lp = r;
                }
            }
        }
    }
    if status.is_none() && lp.period > opts.period_floor * (1.0 + 1e-9) {
        let (polished, converged) = newton_polish(&obj, &lp, opts, true)?;
        lp = polished;
        trace.converged = converged;
        let (value, grad) = obj.gradient(&lp)?;
        trace.entries.push(TraceEntry {
            iteration: trace.entries.len(),
            value,
            period: lp.period,
            grad_norm: grad.norm(&lp),
            max_defect: grad.defects(&lp).into_iter().fold(0.0, f64::max),
        });
    }
    let status = status.unwrap_or_else(|| palais_smale_monitor(&trace));
    let value = obj.value(&lp)?;
    let critical = if status == PsClass::Converged {
        Some(CriticalPoint::assess(&lp, sys, k, convention, CriticalKind::Minimizer)?)
    } else {
        None
    };
    Ok(DescentReport { status, value, final_loop: lp, critical, trace })
}

/// Newton iteration on the exact gradient with the finite-difference
/// Hessian. With `minimize` the eigenvalues are replaced by their absolute
/// values and steps must lower the action; otherwise steps must lower the
/// gradient norm, so the iteration converges to the nearest critical point
/// of any index.
pub(crate) fn newton_polish(
    obj: &Objective,
    start: &LoopPath,
    opts: &SearchOptions,
    minimize: bool,
) -> Result<(LoopPath, bool), SearchError> {
    let mut lp = start.clone();
    let merit = |l: &LoopPath| -> Result<(f64, f64, f64, DVector<f64>), SearchError> {
        let (v, g) = obj.gradient(l)?;
        let defect = g.defects(l).into_iter().fold(0.0, f64::max);
        let gs = flatten(&g).component_mul(&scaling(l));
        Ok((v, defect, g.d_period, gs))
    };
    for _ in 0..opts.newton_iters {
        let (value, defect, dt, gs) = merit(&lp)?;
        if defect < opts.tol_residual && dt.abs() < opts.tol_residual {
            return Ok((lp, true));
        }
        let h = hessian(obj, &lp)?;
        let d = scaling(&lp);
        let eig = scaled_eigen(&h, &d);
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        let floor = 1e-9 * top;
        let mut step_s = DVector::zeros(gs.len());
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(j);
            let c = v.dot(&gs);
            let l = if minimize { lam.abs().max(floor) } else { lam.signum() * lam.abs().max(floor) };
            step_s -= (c / l) * v;
        }
        let step = step_s.component_mul(&d);
        let z = pack(&lp);
        let g2 = gs.norm_squared();
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1.0 / 1024.0 {
            let cand = unpack(&lp, &(&z + alpha * &step));
            if valid(&cand) {
                if let Ok((v, _, _, gs_new)) = merit(&cand) {
                    let ok = if minimize { v <= value + 1e-12 * value.abs().max(1.0) } else { gs_new.norm_squared() < g2 };
                    if ok {
                        lp = cand;
                        moved = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let (_, defect, dt, _) = merit(&lp)?;
    Ok((lp, defect < opts.tol_residual && dt.abs() < opts.tol_residual))
}

/// Eigenvector following towards an index-one saddle: uphill along the
/// lowest Hessian mode, downhill along the rest, inside a trust region in
/// scaled coordinates. Steps are kept when they lower the gradient norm.
pub(crate) fn saddle_search(obj: &Objective, start: &LoopPath, opts: &SearchOptions) -> Result<(LoopPath, bool), SearchError> {
    let mut lp = start.clone();
    let state = |l: &LoopPath| -> Result<(f64, f64, DVector<f64>), SearchError> {
        let (_, g) = obj.gradient(l)?;
        let defect = g.defects(l).into_iter().fold(0.0, f64::max);
        Ok((defect, g.d_period, flatten(&g).component_mul(&scaling(l))))
    };
    let (mut defect, mut dt, mut gs) = state(&lp)?;
    let mut trust: f64 = 0.5;
    let mut eig = None;
    for _ in 0..opts.newton_iters * 4 {
        if defect < opts.tol_residual && dt.abs() < opts.tol_residual {
            return Ok((lp, true));
        }
        let d = scaling(&lp);
        let e = match eig.take() {
            Some(e) => e,
            None => scaled_eigen(&hessian(obj, &lp)?, &d),
        };
        let top = e.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        let floor = 1e-9 * top;
        let lowest = e.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(j, _)| j);
        let mut step_s = DVector::zeros(gs.len());
        for (j, lam) in e.eigenvalues.iter().enumerate() {
            let v = e.eigenvectors.column(j);
            let c = v.dot(&gs);
            let curvature = lam.abs().max(floor);
            step_s += if j == lowest { (c / curvature) * v } else { -(c / curvature) * v };
        }
        let len = step_s.norm();
        if len > trust {
            step_s *= trust / len;
        }
        let cand = unpack(&lp, &(pack(&lp) + step_s.component_mul(&d)));
        let next = if valid(&cand) { state(&cand).ok() } else { None };
        match next {
            Some((cd, ct, cg)) if cg.norm() < gs.norm() => {
                lp = cand;
                (defect, dt, gs) = (cd, ct, cg);
                trust = (trust * 2.0).min(2.0);
            }
            _ => {
                trust *= 0.25;
                eig = Some(e);
                if trust < 1e-10 {
                    break;
                }
            }
        }
    }
    Ok((lp, defect < opts.tol_residual && dt.abs() < opts.tol_residual))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorseData {
    pub index: usize,
    pub nullity: usize,
    /// Time-shift modes removed before counting.
    pub symmetry_modes: usize,
    pub smallest_eigenvalue: f64,
    pub threshold: f64,
}

/// Index and nullity of the discrete second variation in `(points, T)`,
/// after deflating the time-shift direction.
pub fn morse_index(
    lp: &LoopPath,
    sys: &MagneticSystem,
    k: f64,
    convention: &ActionConvention,
) -> Result<MorseData, SearchError> {
    let obj = Objective { sys, k, convention };
    let h = hessian(&obj, lp)?;
    let d = scaling(lp);
    let t = shift_mode(lp);
    let dim = t.len();
    let symmetric = t.norm() > 0.0;
    let hs = {
        let full = nalgebra::DMatrix::from_fn(dim, dim, |i, j| d[i] * h[(i, j)] * d[j]);
        if symmetric {
            let p = nalgebra::DMatrix::identity(dim, dim) - &t * t.transpose();
            &p * full * &p
        } else {
            full
        }
    };
    let eig = nalgebra::SymmetricEigen::new(hs);
    let mut values: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(j, l)| (*l, eig.eigenvectors.column(j).dot(&t).abs()))
        .collect();
    if symmetric {
        let drop = values.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(j, _)| j).expect("nonempty");
        values.remove(drop);
    }
    let top = values.iter().fold(0.0f64, |a, (l, _)| a.max(l.abs()));
    let threshold = 1e-6 * top;
    Ok(MorseData {
        index: values.iter().filter(|(l, _)| *l < -threshold).count(),
        nullity: values.iter().filter(|(l, _)| l.abs() <= threshold).count(),
        symmetry_modes: usize::from(symmetric),
        smallest_eigenvalue: values.iter().map(|(l, _)| *l).fold(f64::INFINITY, f64::min),
        threshold,
    })
}

impl CriticalPoint {
    /// Evaluates diagnostics and the Morse data of a converged loop.
    pub fn assess(
        lp: &LoopPath,
        sys: &MagneticSystem,
        k: f64,
        convention: &ActionConvention,
        kind: CriticalKind,
    ) -> Result<Self, SearchError> {
        let report = action_sk(lp, sys, k, convention)?;
        let morse = morse_index(lp, sys, k, convention)?;
        Ok(CriticalPoint {
            loop_path: lp.clone(),
            k,
            value: report.total,
            ode_residual: report.max_defect,
            d_period: report.d_period,
            grad_norm: report.grad_norm,
            index: morse.index,
            nullity: morse.nullity,
            morse,
            kind,
        })
    }
}
