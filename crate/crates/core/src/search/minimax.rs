//! Mountain passes between an iterated minimizer and an iterated valley
//! loop by the elastic string method, and scans of the minimax values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{geodesic_lerp, iterate_loop, ActionConvention, LoopPath};
use crate::dynamics::MagneticSystem;
use crate::geometry::hyperbolic_distance;

use super::descent::{armijo_step, find_local_min, newton_polish, saddle_search};
use super::linalg::Objective;
use super::{CriticalKind, CriticalPoint, PsClass, SearchError, SearchOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaxOptions {
    /// Loops on the path, endpoints included.
    pub images: usize,
    pub max_iters: usize,
    /// The path maximum counts as stable once it moved less than this
    /// (relative) over `window` iterations.
    pub stable_tol: f64,
    pub window: usize,
    /// Relaxation and refinement rounds before giving up on a saddle.
    pub rounds: usize,
    pub search: SearchOptions,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self { images: 32, max_iters: 600, stable_tol: 1e-5, window: 40, rounds: 3, search: SearchOptions::default() }
    }
}

/// A discrete path of loops with its action profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimaxPath {
    pub n: usize,
    pub loops: Vec<LoopPath>,
    pub values: Vec<f64>,
    pub running_max: f64,
}

impl MinimaxPath {
    pub fn argmax(&self) -> usize {
        self.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(j, _)| j)
    }

    /// Largest pointwise hyperbolic gap between consecutive loops.
    pub fn max_gap(&self) -> f64 {
        self.loops
            .windows(2)
            .map(|w| loop_gap(&w[0], &w[1]))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MountainPass {
    pub critical: CriticalPoint,
    /// The critical value when the saddle refinement converged, the path
    /// maximum otherwise. Either way an upper bound for the true minimax.
    pub estimate: f64,
    /// `|path maximum − refined critical value|`.
    pub noise: f64,
    pub converged: bool,
    pub status: PsClass,
    /// Loops within the stability tolerance of the maximum.
    pub plateau_width: usize,
    pub iterations: usize,
    pub path: MinimaxPath,
}

fn loop_gap(a: &LoopPath, b: &LoopPath) -> f64 {
    a.points.iter().zip(&b.points).map(|(p, q)| hyperbolic_distance(*p, *q)).fold(0.0, f64::max)
}

/// Distance between loops used to space the path evenly.
fn loop_distance(a: &LoopPath, b: &LoopPath) -> f64 {
    let m = a.len() as f64;
    let pts: f64 = a.points.iter().zip(&b.points).map(|(p, q)| hyperbolic_distance(*p, *q).powi(2)).sum::<f64>() / m;
    (pts + (a.period / b.period).ln().powi(2)).sqrt()
}

/// Pointwise geodesic interpolation, log-linear in the period.
fn interpolate(a: &LoopPath, b: &LoopPath, t: f64) -> LoopPath {
    let raw: Vec<f64> = a.fractions.iter().zip(&b.fractions).map(|(x, y)| x * (1.0 - t) + y * t).collect();
    let total: f64 = raw.iter().sum();
    LoopPath {
        points: a.points.iter().zip(&b.points).map(|(p, q)| geodesic_lerp(*p, *q, t)).collect(),
        period: (a.period.ln() * (1.0 - t) + b.period.ln() * t).exp(),
        fractions: raw.iter().map(|f| f / total).collect(),
        class: a.class.clone(),
    }
}

/// Interpolation that moves the `n` laps one after another: lap `j` runs
/// its own interpolation over `t ∈ [j/n, (j+1)/n]`. Requires `a` and `b`
/// to agree at lap boundaries so the loop stays continuous.
fn interpolate_laps(a: &LoopPath, b: &LoopPath, n: usize, t: f64) -> LoopPath {
    let m = a.len();
    let lap_of = |i: usize| i * n / m;
    let s = |j: usize| (n as f64 * t - j as f64).clamp(0.0, 1.0);
    // Segment durations: each lap's period grows log-linearly on its own.
    let durations: Vec<f64> = (0..m)
        .map(|i| {
            let sj = s(lap_of(i));
            (a.period * a.fractions[i]).powf(1.0 - sj) * (b.period * b.fractions[i]).powf(sj)
        })
        .collect();
    let period: f64 = durations.iter().sum();
    LoopPath {
        points: (0..m).map(|i| geodesic_lerp(a.points[i], b.points[i], s(lap_of(i)))).collect(),
        period,
        fractions: durations.iter().map(|d| d / period).collect(),
        class: a.class.clone(),
    }
}

/// Whether `a` and `b` coincide at the `n` lap boundaries.
fn laps_pinned(a: &LoopPath, b: &LoopPath, n: usize) -> bool {
    let m = a.len();
    m % n == 0 && (0..n).all(|j| hyperbolic_distance(a.points[j * m / n], b.points[j * m / n]) < 1e-9)
}

/// Rotates `b` to the time shift closest to `a` pointwise.
fn align(a: &LoopPath, b: &LoopPath) -> LoopPath {
    let m = b.len();
    let cost = |s: usize| -> f64 {
        let r = b.rotated(s);
        a.points.iter().zip(&r.points).map(|(p, q)| hyperbolic_distance(*p, *q).powi(2)).sum()
    };
    let best = (0..m).min_by(|x, y| cost(*x).total_cmp(&cost(*y))).unwrap_or(0);
    b.rotated(best)
}

/// Re-spaces interior loops to equal [`loop_distance`] along the path.
fn respace(loops: &[LoopPath]) -> Vec<LoopPath> {
    let m = loops.len();
    let mut cum = vec![0.0; m];
    for j in 1..m {
        cum[j] = cum[j - 1] + loop_distance(&loops[j - 1], &loops[j]);
    }
    let total = cum[m - 1];
    if !(total > 0.0) {
        return loops.to_vec();
    }
    let mut out = Vec::with_capacity(m);
    out.push(loops[0].clone());
    let mut seg = 0;
    for j in 1..m - 1 {
        let target = total * j as f64 / (m - 1) as f64;
        while seg + 2 < m && cum[seg + 1] < target {
            seg += 1;
        }
        let width = cum[seg + 1] - cum[seg];
        let t = if width > 0.0 { ((target - cum[seg]) / width).clamp(0.0, 1.0) } else { 0.0 };
        out.push(interpolate(&loops[seg], &loops[seg + 1], t));
    }
    out.push(loops[m - 1].clone());
    out
}

/// Mountain pass from `ψⁿ(minimizer)` to `ψⁿ(valley)`.
///
/// For `n > 1` the initial path moves one lap at a time when the endpoints
/// share their lap boundaries, so its maximum is at most
/// `(n−1)·S(minimizer) + max S` of the single-lap path.
///
/// Interior loops take one damped descent step each (never raising their
/// own action), then the path is re-spaced. Once the path maximum is
/// stable, the arg-max loop is refined by Newton's method on the gradient
/// norm, falling back to its neighbours if that fails.
pub fn mountain_pass(
    minimizer: &CriticalPoint,
    valley: &LoopPath,
    n: usize,
    sys: &MagneticSystem,
    k: f64,
    convention: &ActionConvention,
    opts: &MinimaxOptions,
) -> Result<MountainPass, SearchError> {
    if opts.images < 3 {
        return Err(SearchError::Invalid(format!("a path needs at least 3 loops, got {}", opts.images)));
    }
    let obj = Objective { sys, k, convention };
    let mut start = iterate_loop(&minimizer.loop_path, n)?;
    let mut end = iterate_loop(valley, n)?;
    if start.class.deck().projective_distance(&end.class.deck()) > 1e-8 {
        return Err(SearchError::Invalid("minimizer and valley lie in different classes".into()));
    }
    let m = start.len().max(end.len());
    if start.len() != m {
        start = start.resampled(m)?;
    }
    if end.len() != m {
        end = end.resampled(m)?;
    }
    let staggered = n > 1 && laps_pinned(&start, &end, n);
    let end = if staggered { end } else { align(&start, &end) };
    let (s_start, s_end) = (obj.value(&start)?, obj.value(&end)?);

    if loop_gap(&start, &end) < 1e-9 && (start.period - end.period).abs() < 1e-9 * start.period {
        let critical = CriticalPoint::assess(&start, sys, k, convention, CriticalKind::Minimizer)?;
        let path = MinimaxPath { n, loops: vec![start, end], values: vec![s_start, s_end], running_max: s_start };
        return Ok(MountainPass {
            estimate: critical.value,
            critical,
            noise: 0.0,
            converged: true,
            status: PsClass::Converged,
            plateau_width: 2,
            iterations: 0,
            path,
        });
    }
    if s_end >= s_start {
        return Err(SearchError::ValleyNotLower { valley: s_end, minimizer: s_start });
    }

    let images = opts.images;
    let mut loops: Vec<LoopPath> = (0..images)
        .map(|j| {
            let t = j as f64 / (images - 1) as f64;
            if staggered {
                interpolate_laps(&start, &end, n, t)
            } else {
                interpolate(&start, &end, t)
            }
        })
        .collect();
    loops[0] = start.clone();
    loops[images - 1] = end.clone();
    let mut steps = vec![1.0; images];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut refined_best: Option<(LoopPath, bool)> = None;
    for _round in 0..opts.rounds.max(1) {
        let escaped = relax(&obj, &mut loops, &mut steps, &mut history, &mut iterations, opts)?;
        let values: Vec<f64> = loops.iter().map(|l| obj.value(l)).collect::<Result<_, _>>()?;
        let argmax = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(j, _)| j);
        if escaped {
            let path_max = values[argmax];
            let critical = CriticalPoint::assess(&loops[argmax], sys, k, convention, CriticalKind::Other)?;
            return Ok(MountainPass {
                critical,
                estimate: path_max,
                noise: f64::NAN,
                converged: false,
                status: PsClass::Escaping,
                plateau_width: 1,
                iterations,
                path: MinimaxPath { n, loops, values, running_max: path_max },
            });
        }
        refined_best = Some(refine(&obj, &loops, argmax, s_start.max(s_end), opts)?);
        if refined_best.as_ref().is_some_and(|(_, ok)| *ok) {
            break;
        }
    }
    let values: Vec<f64> = loops.iter().map(|l| obj.value(l)).collect::<Result<_, _>>()?;
    let path_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let path = MinimaxPath { n, loops, values, running_max: path_max };
    let plateau_width = path.values.iter().filter(|v| path_max - **v <= opts.stable_tol * (1.0 + path_max.abs()) * 10.0).count();
    let (refined, converged) = refined_best.expect("at least one round runs");
    let kind = if converged { CriticalKind::MountainPass } else { CriticalKind::Other };
    let critical = CriticalPoint::assess(&refined, sys, k, convention, kind)?;
    let estimate = if converged { critical.value } else { path_max };
    Ok(MountainPass {
        noise: (path_max - critical.value).abs(),
        estimate,
        critical,
        converged,
        status: if converged { PsClass::Converged } else { PsClass::Undecided },
        plateau_width,
        iterations,
        path,
    })
}

/// Damped descent of the interior loops with re-spacing until the path
/// maximum is stable. Returns whether the arg-max period hit the cap.
fn relax(
    obj: &Objective,
    loops: &mut Vec<LoopPath>,
    steps: &mut [f64],
    history: &mut Vec<f64>,
    iterations: &mut usize,
    opts: &MinimaxOptions,
) -> Result<bool, SearchError> {
    let images = loops.len();
    let begin = history.len();
    for _ in 0..opts.max_iters {
        *iterations += 1;
        let moved: Vec<Result<(LoopPath, f64), SearchError>> = loops[1..images - 1]
            .par_iter()
            .zip(steps[1..images - 1].par_iter())
            .map(|(lp, step)| {
                let (v, g) = obj.gradient(lp)?;
                Ok(match armijo_step(obj, lp, v, &g, *step, &opts.search)? {
                    Some((next, _, s)) => (next, s),
                    None => (lp.clone(), *step * 0.5),
                })
            })
            .collect();
        for (j, r) in moved.into_iter().enumerate() {
            let (lp, s) = r?;
            loops[j + 1] = lp;
            steps[j + 1] = s;
        }
        *loops = respace(loops);
        let values: Vec<f64> = loops.par_iter().map(|l| obj.value(l)).collect::<Result<_, _>>()?;
        let (argmax, top) = values.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty path");
        history.push(top);
        if loops[argmax].period >= opts.search.period_cap {
            return Ok(true);
        }
        if history.len() - begin > opts.window {
            let past = history[history.len() - 1 - opts.window];
            if (past - top).abs() <= opts.stable_tol * (1.0 + top.abs()) {
                break;
            }
        }
    }
    Ok(false)
}

/// Saddle refinement from the arg-max loop, then its neighbours. A result
/// counts only if it converged above both endpoint values.
fn refine(
    obj: &Objective,
    loops: &[LoopPath],
    argmax: usize,
    floor: f64,
    opts: &MinimaxOptions,
) -> Result<(LoopPath, bool), SearchError> {
    let images = loops.len();
    let mut order = vec![argmax];
    for off in 1..images {
        for j in [argmax.checked_sub(off), Some(argmax + off)].into_iter().flatten() {
            if j > 0 && j + 1 < images && order.len() < 5 {
                order.push(j);
            }
        }
    }
    let mut first = None;
    for j in order {
        let (mut refined, mut ok) = saddle_search(obj, &loops[j], &opts.search)?;
        if !ok {
            (refined, ok) = newton_polish(obj, &loops[j], &opts.search, false)?;
        }
        if ok && obj.value(&refined)? > floor {
            return Ok((refined, true));
        }
        first.get_or_insert(refined);
    }
    Ok((first.expect("arg-max loop refined"), false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub k: f64,
    pub n: usize,
    pub c_n: f64,
    pub converged: bool,
    pub minimizer_value: f64,
    pub valley_value: f64,
    pub argmax_residual: f64,
    pub noise: f64,
    pub index: usize,
    /// Why the cell failed, when it did.
    pub error: Option<String>,
}

/// Minimax values over a grid of energies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub grid: Vec<f64>,
    pub ns: Vec<usize>,
    pub rows: Vec<ScanRow>,
    /// `(n, k_i, k_{i+1})` where `c_n` dropped by more than the noise.
    pub monotonicity_violations: Vec<(usize, f64, f64)>,
    /// Per grid energy with a negative minimizer: the slope of the affine
    /// fit of `c_n` against `n`.
    pub bangert_slopes: Vec<(f64, f64)>,
}

impl ScanTable {
    pub fn row(&self, k: f64, n: usize) -> Option<&ScanRow> {
        self.rows.iter().find(|r| r.k == k && r.n == n)
    }

    /// CSV with a header row; floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,n,c_n,converged,minimizer_value,valley_value,argmax_residual,noise,index\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.16e},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.k, r.n, r.c_n, r.converged, r.minimizer_value, r.valley_value, r.argmax_residual, r.noise, r.index
            ));
        }
        s
    }

    fn audit(&mut self) {
        self.monotonicity_violations.clear();
        self.bangert_slopes.clear();
        for &n in &self.ns {
            let cells: Vec<&ScanRow> = self.rows.iter().filter(|r| r.n == n && r.converged).collect();
            for w in cells.windows(2) {
                if w[1].c_n < w[0].c_n - (1e-6 + w[0].noise + w[1].noise) {
                    self.monotonicity_violations.push((n, w[0].k, w[1].k));
                }
            }
        }
        for &k in &self.grid {
            let cells: Vec<&ScanRow> = self.rows.iter().filter(|r| r.k == k && r.converged && r.minimizer_value < 0.0).collect();
            if cells.len() < 2 {
                continue;
            }
            let m = cells.len() as f64;
            let mx = cells.iter().map(|r| r.n as f64).sum::<f64>() / m;
            let my = cells.iter().map(|r| r.c_n).sum::<f64>() / m;
            let sxy: f64 = cells.iter().map(|r| (r.n as f64 - mx) * (r.c_n - my)).sum();
            let sxx: f64 = cells.iter().map(|r| (r.n as f64 - mx).powi(2)).sum();
            self.bangert_slopes.push((k, sxy / sxx));
        }
    }
}

/// Runs descent from `seed` and then `mountain_pass` towards `ψ²` of the
/// minimizer for every `(k, n)`. Cells are independent and computed in
/// parallel; the output order is fixed by the grid. A failing cell is
/// recorded as not converged and the scan goes on.
pub fn scan_minimax(
    grid: &[f64],
    ns: &[usize],
    seed: &LoopPath,
    sys: &MagneticSystem,
    convention: &ActionConvention,
    opts: &MinimaxOptions,
) -> Result<ScanTable, SearchError> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SearchError::Invalid("energy grid must be strictly increasing".into()));
    }
    let per_k: Vec<Vec<ScanRow>> = grid
        .par_iter()
        .map(|&k| {
            let failed = |minimizer_value: f64, note: Option<String>| -> Vec<ScanRow> {
                ns.iter()
                    .map(|&n| ScanRow {
                        k,
                        n,
                        c_n: f64::NAN,
                        converged: false,
                        minimizer_value,
                        valley_value: f64::NAN,
                        argmax_residual: f64::NAN,
                        noise: f64::NAN,
                        index: 0,
                        error: note.clone(),
                    })
                    .collect()
            };
            let descent = match find_local_min(seed, sys, k, convention, &opts.search) {
                Ok(d) => d,
                Err(e) => return failed(f64::NAN, Some(e.to_string())),
            };
            let Some(min) = descent.critical else {
                return failed(descent.value, Some(format!("descent ended {:?}", descent.status)));
            };
            if min.value >= 0.0 {
                return failed(min.value, Some("minimizer action is not negative".into()));
            }
            let valley = match iterate_loop(&min.loop_path, 2) {
                Ok(v) => v,
                Err(e) => return failed(min.value, Some(e.to_string())),
            };
            let valley_value = Objective { sys, k, convention }.value(&valley).unwrap_or(f64::NAN);
            ns.par_iter()
                .map(|&n| match mountain_pass(&min, &valley, n, sys, k, convention, opts) {
                    Ok(mp) => ScanRow {
                        k,
                        n,
                        c_n: mp.estimate,
                        converged: mp.converged,
                        minimizer_value: min.value,
                        valley_value,
                        argmax_residual: mp.critical.ode_residual,
                        noise: mp.noise,
                        index: mp.critical.index,
                        error: None,
                    },
                    Err(e) => ScanRow {
                        k,
                        n,
                        c_n: f64::NAN,
                        converged: false,
                        minimizer_value: min.value,
                        valley_value,
                        argmax_residual: f64::NAN,
                        noise: f64::NAN,
                        index: 0,
                        error: Some(e.to_string()),
                    },
                })
                .collect()
        })
        .collect();
    let mut table = ScanTable { grid: grid.to_vec(), ns: ns.to_vec(), ..Default::default() };
    table.rows = per_k.into_iter().flatten().collect();
    table.audit();
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HPoint;

    #[test]
    fn respacing_keeps_endpoints_and_equalizes() {
        let a = LoopPath::circle(HPoint::I, 0.3, 1.0, 2.0, 16).unwrap();
        let b = LoopPath::circle(HPoint::I, 0.9, 1.0, 3.0, 16).unwrap();
        let ts = [0.0, 0.05, 0.1, 0.5, 0.9, 1.0];
        let loops: Vec<LoopPath> = ts.iter().map(|t| interpolate(&a, &b, *t)).collect();
        let out = respace(&loops);
        assert_eq!(out[0], loops[0]);
        assert_eq!(out[5], loops[5]);
        let gaps: Vec<f64> = out.windows(2).map(|w| loop_distance(&w[0], &w[1])).collect();
        for g in &gaps {
            assert!((g - gaps[0]).abs() < 1e-6 * gaps[0], "{gaps:?}");
        }
    }

    #[test]
    fn empty_grid_gives_empty_table() {
        let sys = MagneticSystem::constant(1.0, 0.1).unwrap();
        let seed = LoopPath::circle(HPoint::I, 0.3, 1.0, 2.0, 16).unwrap();
        let t = scan_minimax(&[], &[1], &seed, &sys, &ActionConvention::new(), &MinimaxOptions::default()).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.to_csv(), "k,n,c_n,converged,minimizer_value,valley_value,argmax_residual,noise,index\n");
    }
}
