use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::action::{
    action_value, estimate_mane, estimate_tau_plus, iterate_loop, tau_plus_trace, ActionConvention, CriticalValues,
    LoopPath,
};
use crate::dynamics::{closure_check_with, integrate_sampled, ClosureOptions, FlowState, MagneticSystem};
use crate::geometry::{octagon_group, theta_primitive, HPoint};
use crate::search::{
    distinctness, find_local_min, mountain_pass, scan_minimax, shooting_check, CriticalPoint, MountainPass,
    ShootingReport,
};

use super::{CliError, ExperimentConfig, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Flow,
    CriticalValues,
    FindOrbits,
    Scan,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::CriticalValues => "critical-values",
            Command::FindOrbits => "find-orbits",
            Command::Scan => "scan",
            Command::Selftest => "selftest",
        }
    }
}

/// Result of a finished run. `success` decides the exit status.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub manifest: RunManifest,
    pub success: bool,
}

/// Validates and dispatches. A run that fails still leaves a manifest
/// recording the error.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let result = config.validate().and_then(|()| match command {
        Command::Flow => cmd_flow(config),
        Command::CriticalValues => cmd_critical_values(config),
        Command::FindOrbits => cmd_find_orbits(config),
        Command::Scan => cmd_scan(config),
        Command::Selftest => cmd_selftest(config),
    });
    if let Err(e) = &result {
        let mut manifest = RunManifest::new(command.name(), config);
        manifest.converged = false;
        manifest.summary = vec![format!("error: {e}")];
        // The original error matters more than a failure to record it.
        let _ = write_json(&config.output.dir, "manifest.json", &manifest);
    }
    result
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.into(), reason: e.to_string() })?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Io { path, reason: e.to_string() })
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    write_file(dir, name, (text + "\n").as_bytes())
}

/// Writes the manifest and packages the outcome.
fn finish(config: &ExperimentConfig, mut manifest: RunManifest, lines: Vec<String>, converged: bool) -> Result<Outcome, CliError> {
    manifest.converged = converged;
    manifest.summary = lines.clone();
    write_json(&config.output.dir, "manifest.json", &manifest)?;
    Ok(Outcome { lines, manifest, success: converged || config.output.allow_partial })
}

/// Integrates one orbit, exports it as CSV and binary, and reports whether
/// it closes on the surface within the horizon.
pub fn cmd_flow(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut manifest = RunManifest::new(Command::Flow.name(), config);
    let k = config.energy.k;
    let sys = config.system(k)?;
    let flow = &config.flow;
    let q = HPoint::new(flow.x, flow.y).map_err(|e| CliError::Config { key: "flow.y".into(), reason: e.to_string() })?;
    let start = FlowState::at_energy(q, flow.angle, k);
    let dt = config.discretization.dt;
    let traj = manifest.timed("integrate", || integrate_sampled(start, &sys, flow.time, dt, flow.stride))?;
    let opts = ClosureOptions { dt, tol_position: config.tolerances.closure, tol_velocity: config.tolerances.closure };
    let horizon = flow.horizon.unwrap_or(flow.time);
    let closure = manifest.timed("closure", || closure_check_with(start, &sys, horizon, opts))?;

    let dir = &config.output.dir;
    write_file(dir, "trajectory.csv", traj.to_csv().as_bytes())?;
    let mut bin = Vec::new();
    traj.write_binary(&mut bin).map_err(|e| CliError::Io { path: dir.join("trajectory.bin"), reason: e.to_string() })?;
    write_file(dir, "trajectory.bin", &bin)?;

    let mut lines = vec![format!("energy drift {:.3e} over t = {}", traj.energy_drift(), flow.time)];
    lines.push(match closure {
        Some(c) => format!(
            "closed, period ≈ {:.10} ({})",
            c.period,
            if c.contractible { "contractible" } else { "non-contractible" }
        ),
        None => "no closure within horizon".to_string(),
    });
    finish(config, manifest, lines, true)
}

/// Estimates the Mañé value (analytic bound and closure transition), `τ₊`
/// and `τ₊*`, and writes the scan traces behind them.
pub fn cmd_critical_values(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut manifest = RunManifest::new(Command::CriticalValues.name(), config);
    let (values, tau_trace, mane_trace) = critical_values(config, &mut manifest)?;
    let dir = &config.output.dir;
    let mut csv = String::from("r,taimanov\n");
    for (r, t) in &tau_trace {
        writeln!(csv, "{r:.16e},{t:.16e}").unwrap();
    }
    write_file(dir, "tau_plus_trace.csv", csv.as_bytes())?;
    let mut csv = String::from("k,closed\n");
    for (k, closed) in &mane_trace {
        writeln!(csv, "{k:.16e},{}", u8::from(*closed)).unwrap();
    }
    write_file(dir, "mane_trace.csv", csv.as_bytes())?;
    write_json(dir, "critical_values.json", &values)?;

    let lines = vec![
        match values.mane_analytic {
            Some(c) => format!("mane_upper = {c}"),
            None => "mane_upper = n/a (field is not constant)".into(),
        },
        format!("mane_dynamical = {}", values.mane_dynamical),
        format!("tau_plus = {}", values.tau_plus),
        format!("tau_plus_star = {}", values.tau_plus_star),
    ];
    finish(config, manifest, lines, true)
}

fn critical_values(config: &ExperimentConfig, manifest: &mut RunManifest) -> Result<(CriticalValues, Vec<(f64, f64)>, Vec<(f64, bool)>), CliError> {
    let sys = config.system(config.energy.k)?;
    let tau = manifest.timed("tau_plus", || estimate_tau_plus(&sys));
    let mane = manifest.timed("mane", || estimate_mane(&sys, config.mane_options()))?;
    let tau_trace = tau_plus_trace(&sys, config.energy.k, 200);
    Ok((CriticalValues::combine(&tau, &mane), tau_trace, mane.trace))
}

#[derive(Serialize)]
struct Dossier<'a> {
    label: String,
    critical: &'a CriticalPoint,
    /// Multiple-shooting confirmation that a true periodic orbit lies nearby.
    shooting: Option<ShootingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mountain_pass: Option<PassSummary>,
}

#[derive(Serialize)]
struct PassSummary {
    n: usize,
    estimate: f64,
    noise: f64,
    converged: bool,
    plateau_width: usize,
    iterations: usize,
    path_values: Vec<f64>,
}

impl PassSummary {
    fn new(n: usize, mp: &MountainPass) -> Self {
        Self {
            n,
            estimate: mp.estimate,
            noise: mp.noise,
            converged: mp.converged,
            plateau_width: mp.plateau_width,
            iterations: mp.iterations,
            path_values: mp.path.values.clone(),
        }
    }
}

/// Minimizer below `τ₊*`, then mountain passes for `n = 1..=n_max`, with
/// one JSON dossier per critical point and a count of geometrically
/// distinct orbits.
pub fn cmd_find_orbits(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut manifest = RunManifest::new(Command::FindOrbits.name(), config);
    let k = config.energy.k;
    let (values, _, _) = critical_values(config, &mut manifest)?;
    if !(k < values.tau_plus_star) {
        return Err(CliError::Refused(format!(
            "k = {k} is not below tau_plus_star = {}; no negative minimizer is guaranteed",
            values.tau_plus_star
        )));
    }
    let sys = config.system(k)?;
    let conv = ActionConvention::new();
    let seed = config.seed_loop(&sys, k)?;
    let descent = manifest.timed("find_local_min", || find_local_min(&seed, &sys, k, &conv, &config.search_options()))?;
    let dir = config.output.dir.clone();
    let mut lines = vec![format!("tau_plus_star = {}", values.tau_plus_star)];
    let Some(min) = descent.critical else {
        lines.push(format!(
            "no minimizer: descent ended {:?} at S = {:.16e}, period {:.6e}",
            descent.status, descent.value, descent.final_loop.period
        ));
        write_json(&dir, "descent_trace.json", &descent.trace)?;
        return finish(config, manifest, lines, false);
    };
    lines.push(format!("minimizer: S = {:.16e}, period {:.10}, index {}", min.value, min.loop_path.period, min.index));
    let shooting = manifest.timed("shooting", || shooting_check(&min, &sys).ok());
    write_json(&dir, "minimizer.json", &Dossier { label: "minimizer".into(), critical: &min, shooting, mountain_pass: None })?;

    let valley = iterate_loop(&min.loop_path, 2)?;
    let mut found = vec![min.clone()];
    let mut all_converged = true;
    for n in 1..=config.search.n_max {
        let mp = manifest.timed(&format!("mountain_pass_{n}"), || {
            mountain_pass(&min, &valley, n, &sys, k, &conv, &config.minimax_options())
        })?;
        all_converged &= mp.converged;
        lines.push(format!(
            "c_{n} = {:.16e} ± {:.1e}, index {}, {}",
            mp.estimate,
            mp.noise,
            mp.critical.index,
            if mp.converged { "converged" } else { "not converged" }
        ));
        let shooting = mp.converged.then(|| shooting_check(&mp.critical, &sys).ok()).flatten();
        write_json(
            &dir,
            &format!("mountain_pass_{n}.json"),
            &Dossier {
                label: format!("mountain pass n = {n}"),
                critical: &mp.critical,
                shooting,
                mountain_pass: Some(PassSummary::new(n, &mp)),
            },
        )?;
        if mp.converged {
            let mut new = true;
            for other in &found {
                new &= distinctness(other, &mp.critical, sys.group())?;
            }
            if new {
                found.push(mp.critical);
            }
        }
    }
    lines.push(format!("distinct orbits: {}", found.len()));
    finish(config, manifest, lines, all_converged)
}

/// Minimax values `c_n(k)` over the energy grid, with per-cell convergence
/// flags, a long-format plot table and the monotonicity audit.
pub fn cmd_scan(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut manifest = RunManifest::new(Command::Scan.name(), config);
    let grid = config.grid();
    if grid.is_empty() {
        return Err(CliError::Config { key: "energy.grid".into(), reason: "scan needs a grid or a range".into() });
    }
    let sys = config.system(grid[0])?;
    let seed = config.seed_loop(&sys, grid[0])?;
    let conv = ActionConvention::new();
    let table = manifest.timed("scan", || scan_minimax(&grid, &config.search.ns, &seed, &sys, &conv, &config.minimax_options()))?;

    let mut long = String::from("k,n,series,value\n");
    for r in &table.rows {
        for (series, v) in [
            ("c_n", r.c_n),
            ("minimizer", r.minimizer_value),
            ("lower_bound", r.n as f64 * r.valley_value),
            ("noise", r.noise),
        ] {
            writeln!(long, "{:.16e},{},{series},{v:.16e}", r.k, r.n).unwrap();
        }
    }
    let mut audit = String::from("n,k_left,k_right\n");
    for (n, a, b) in &table.monotonicity_violations {
        writeln!(audit, "{n},{a:.16e},{b:.16e}").unwrap();
    }
    let dir = &config.output.dir;
    write_file(dir, "scan.csv", table.to_csv().as_bytes())?;
    write_file(dir, "scan_long.csv", long.as_bytes())?;
    write_file(dir, "monotonicity.csv", audit.as_bytes())?;
    write_json(dir, "scan.json", &table)?;

    let converged = table.rows.iter().filter(|r| r.converged).count();
    let mut lines = vec![format!("{converged}/{} cells converged", table.rows.len())];
    for r in table.rows.iter().filter(|r| !r.converged) {
        lines.push(format!("  k = {}, n = {}: {}", r.k, r.n, r.error.as_deref().unwrap_or("not converged")));
    }
    lines.push(if table.monotonicity_violations.is_empty() {
        "monotonicity: no violations".into()
    } else {
        format!("monotonicity: {} violations", table.monotonicity_violations.len())
    });
    for (k, slope) in &table.bangert_slopes {
        lines.push(format!("k = {k}: c_n slope in n {slope:.6e}"));
    }
    finish(config, manifest, lines, converged == table.rows.len())
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Quick seeded checks of the core identities; fails if any exceeds its
/// tolerance.
pub fn cmd_selftest(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut manifest = RunManifest::new(Command::Selftest.name(), config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut checks = Vec::new();

    let s = 1.0 + rng.random::<f64>();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = HPoint::raw(rng.random_range(-10.0..10.0), 10f64.powf(rng.random_range(-3.0..3.0)));
        worst = worst.max((theta_primitive(p, s)?.dual_norm(p) - s).abs());
    }
    checks.push(Check { name: "primitive_norm", value: worst, tolerance: 1e-12 });

    let group = octagon_group()?;
    checks.push(Check { name: "octagon_ball_2", value: (group.ball(2).len() as f64 - 65.0).abs(), tolerance: 0.0 });

    let constant = MagneticSystem::constant(1.0, 0.3)?;
    let traj = manifest.timed("flow", || {
        integrate_sampled(FlowState::at_energy(HPoint::I, rng.random_range(0.0..6.28), 0.3), &constant, 10.0, 1e-3, 100)
    })?;
    checks.push(Check { name: "energy_drift", value: traj.energy_drift(), tolerance: 1e-8 });

    let osc = config.system(config.energy.k)?;
    let conv = ActionConvention::new();
    let mut lp = LoopPath::circle(osc.field_minimum_point(), 0.5, 1.0, 5.0, 24)?;
    for p in &mut lp.points {
        p.x += 0.05 * rng.random_range(-1.0..1.0) * p.y;
    }
    let base = action_value(&lp, &osc, config.energy.k, &conv)?;
    let thrice = action_value(&iterate_loop(&lp, 3)?, &osc, config.energy.k, &conv)?;
    checks.push(Check { name: "equivariance", value: (thrice - 3.0 * base).abs() / (1.0 + base.abs()), tolerance: 1e-9 });

    let tau_constant = estimate_tau_plus(&constant).value;
    checks.push(Check { name: "tau_plus_constant", value: tau_constant.abs(), tolerance: 0.0 });

    let mut csv = String::from("check,value,tolerance,passed\n");
    let mut lines = Vec::new();
    for c in &checks {
        writeln!(csv, "{},{:.16e},{:.16e},{}", c.name, c.value, c.tolerance, c.passed()).unwrap();
        lines.push(format!("{} {} ({:.3e})", if c.passed() { "PASS" } else { "FAIL" }, c.name, c.value));
    }
    write_file(&config.output.dir, "selftest.csv", csv.as_bytes())?;
    let ok = checks.iter().all(Check::passed);
    // A failed self-test is never excused by `allow_partial`.
    let mut outcome = finish(config, manifest, lines, ok)?;
    outcome.success = ok;
    Ok(outcome)
}
