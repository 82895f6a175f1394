//! Experiment configuration (TOML with sections, unknown keys rejected) and
//! the run manifest written next to every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{LoopPath, ManeOptions};
use crate::dynamics::{BumpParams, DynamicsError, FieldKind, MagneticSystem, TurnConvention};
use crate::geometry::HPoint;
use crate::search::{MinimaxOptions, SearchOptions};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldChoice {
    Constant,
    Oscillating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub s: f64,
    pub field: FieldChoice,
    pub amplitude: f64,
    pub radius: f64,
    pub p0: [f64; 2],
    pub convention: TurnConvention,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let bump = BumpParams::default();
        Self {
            s: 1.0,
            field: FieldChoice::Oscillating,
            amplitude: bump.amplitude,
            radius: bump.radius,
            p0: [bump.center.x, bump.center.y],
            convention: TurnConvention::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub k: f64,
    /// Explicit energy grid for scans; takes precedence over `range`.
    pub grid: Vec<f64>,
    pub range: Option<GridRange>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { k: 0.02, grid: Vec::new(), range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Points per seed loop.
    pub points: usize,
    /// Loops per minimax path.
    pub images: usize,
    /// Flow integrator step.
    pub dt: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self { points: 32, images: 32, dt: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub residual: f64,
    pub newton_switch: f64,
    /// Relative stability of the path maximum.
    pub stable: f64,
    pub mane_resolution: f64,
    pub closure: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { residual: 1e-7, newton_switch: 1e-3, stable: 1e-5, mane_resolution: 0.02, closure: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub x: f64,
    pub y: f64,
    /// Coordinate direction of the initial velocity.
    pub angle: f64,
    pub time: f64,
    /// Closure search horizon; defaults to `time`.
    pub horizon: Option<f64>,
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { x: 0.0, y: 1.0, angle: 0.0, time: 100.0, horizon: None, stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Highest iterate for find-orbits mountain passes.
    pub n_max: usize,
    /// Iterates scanned by `scan`.
    pub ns: Vec<usize>,
    /// Radius of the seed circle around the field minimum point.
    pub seed_radius: f64,
    pub max_iters: usize,
    pub string_iters: usize,
    pub period_floor: f64,
    pub period_cap: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { n_max: 1, ns: vec![1, 2, 3], seed_radius: 0.7, max_iters: 20_000, string_iters: 600, period_floor: 1e-3, period_cap: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Exit successfully even when some cells did not converge.
    pub allow_partial: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), allow_partial: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: SystemConfig,
    pub energy: EnergyConfig,
    pub discretization: DiscretizationConfig,
    pub tolerances: ToleranceConfig,
    pub flow: FlowConfig,
    pub search: SearchConfig,
    pub output: OutputConfig,
}

/// Dotted key of a parse error: the enclosing `[section]` plus the key on
/// the offending line, or the field named in an unknown-field message.
fn error_key(text: &str, err: &toml::de::Error) -> String {
    let Some(span) = err.span() else { return "config".into() };
    let before = &text[..span.start.min(text.len())];
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let section = before[..line_start]
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix('[').and_then(|l| l.strip_suffix(']')))
        .map(str::trim)
        .filter(|_| !line.trim_start().starts_with('['));
    let named = err.message().split('`').nth(1).filter(|_| err.message().starts_with("unknown field"));
    let key = named.or_else(|| line.split('=').next().map(str::trim).filter(|k| !k.is_empty() && !k.starts_with('[')));
    match (section, key) {
        (Some(s), Some(k)) => format!("{s}.{k}"),
        (Some(s), None) => s.to_string(),
        (None, Some(k)) => k.to_string(),
        (None, None) => "config".into(),
    }
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config { key: key.into(), reason: format!("must be positive, got {v}") })
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config { key: error_key(text, &e), reason: e.message().to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.into(), reason: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("energy.k", self.energy.k)?;
        positive("discretization.dt", self.discretization.dt)?;
        for (key, v) in [
            ("tolerances.residual", self.tolerances.residual),
            ("tolerances.newton_switch", self.tolerances.newton_switch),
            ("tolerances.stable", self.tolerances.stable),
            ("tolerances.mane_resolution", self.tolerances.mane_resolution),
            ("tolerances.closure", self.tolerances.closure),
            ("flow.time", self.flow.time),
            ("flow.y", self.flow.y),
            ("search.seed_radius", self.search.seed_radius),
            ("search.period_floor", self.search.period_floor),
        ] {
            positive(key, v)?;
        }
        if let Some(h) = self.flow.horizon {
            positive("flow.horizon", h)?;
        }
        if self.search.period_cap <= self.search.period_floor {
            return Err(CliError::Config { key: "search.period_cap".into(), reason: "must exceed search.period_floor".into() });
        }
        if self.discretization.points < crate::action::MIN_POINTS {
            return Err(CliError::Config {
                key: "discretization.points".into(),
                reason: format!("need at least {}", crate::action::MIN_POINTS),
            });
        }
        if self.discretization.images < 3 {
            return Err(CliError::Config { key: "discretization.images".into(), reason: "need at least 3".into() });
        }
        if self.search.ns.contains(&0) {
            return Err(CliError::Config { key: "search.ns".into(), reason: "iterates start at 1".into() });
        }
        let grid = self.grid();
        if grid.iter().any(|k| !(*k > 0.0)) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config { key: "energy.grid".into(), reason: "must be positive and strictly increasing".into() });
        }
        Ok(())
    }

    /// Scan grid: the explicit list, else the evenly spaced range.
    pub fn grid(&self) -> Vec<f64> {
        if !self.energy.grid.is_empty() {
            return self.energy.grid.clone();
        }
        match self.energy.range {
            Some(GridRange { min, max, points: 1 }) => vec![0.5 * (min + max)],
            Some(GridRange { min, max, points }) => {
                (0..points).map(|j| min + (max - min) * j as f64 / (points - 1) as f64).collect()
            }
            None => Vec::new(),
        }
    }

    pub fn system(&self, k: f64) -> Result<MagneticSystem, CliError> {
        let sys = &self.system;
        let field = match sys.field {
            FieldChoice::Constant => FieldKind::Constant,
            FieldChoice::Oscillating => FieldKind::Oscillating(BumpParams {
                amplitude: sys.amplitude,
                radius: sys.radius,
                center: HPoint::new(sys.p0[0], sys.p0[1]).map_err(|e| CliError::Config { key: "system.p0".into(), reason: e.to_string() })?,
            }),
        };
        MagneticSystem::build(sys.s, field, k, sys.convention).map_err(|e| {
            let key = match &e {
                DynamicsError::InvalidParameter { name, .. } => match *name {
                    "k" => "energy.k",
                    "s" => "system.s",
                    "rho" => "system.radius",
                    "amplitude" => "system.amplitude",
                    _ => "system.p0",
                },
                DynamicsError::BumpOutsideDomain { .. } => "system.radius",
                DynamicsError::NonPositiveFlux { .. } => "system.amplitude",
                _ => "system",
            };
            CliError::Config { key: key.into(), reason: e.to_string() }
        })
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            tol_residual: self.tolerances.residual,
            newton_switch: self.tolerances.newton_switch,
            max_iters: self.search.max_iters,
            period_floor: self.search.period_floor,
            period_cap: self.search.period_cap,
            ..SearchOptions::default()
        }
    }

    pub fn minimax_options(&self) -> MinimaxOptions {
        MinimaxOptions {
            images: self.discretization.images,
            max_iters: self.search.string_iters,
            stable_tol: self.tolerances.stable,
            search: self.search_options(),
            ..MinimaxOptions::default()
        }
    }

    pub fn mane_options(&self) -> ManeOptions {
        ManeOptions { resolution: self.tolerances.mane_resolution, ..ManeOptions::default() }
    }

    /// Counterclockwise seed circle about the field minimum point, with the
    /// period that gives it energy `k`.
    pub fn seed_loop(&self, sys: &MagneticSystem, k: f64) -> Result<LoopPath, CliError> {
        let r = self.search.seed_radius;
        let period = 2.0 * std::f64::consts::PI * r.sinh() / (2.0 * k).sqrt();
        Ok(LoopPath::circle(sys.field_minimum_point(), r, 1.0, period, self.discretization.points)?)
    }

    /// SHA-256 of the canonical JSON form; independent of key order in the
    /// source file.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    /// Wall-clock seconds per operation, in execution order.
    pub timings: Vec<(String, f64)>,
    pub converged: bool,
    pub summary: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &ExperimentConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config_hash: config.hash(),
            seed: config.seed,
            timings: Vec::new(),
            converged: true,
            summary: Vec::new(),
        }
    }

    /// Runs `op`, recording its duration under `name`.
    pub fn timed<T>(&mut self, name: &str, op: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = op();
        self.timings.push((name.into(), start.elapsed().as_secs_f64()));
        out
    }
}
