//! Critical points of the action: local minimizers, mountain passes over
//! paths of loops, Morse data, and geometric distinctness.

mod descent;
mod distinct;
mod linalg;
mod minimax;
mod shooting;

pub use descent::{find_local_min, morse_index, palais_smale_monitor, DescentReport, DescentTrace, MorseData, PsClass, TraceEntry};
pub use distinct::{distinctness, surface_hausdorff, DISTINCTNESS_THRESHOLD};
pub use shooting::{shooting_check, ShootingReport};
pub use minimax::{mountain_pass, scan_minimax, MinimaxOptions, MinimaxPath, MountainPass, ScanRow, ScanTable};

use serde::{Deserialize, Serialize};

use crate::action::{ActionError, LoopPath};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("critical point has not converged (residual {residual})")]
    NotConverged { residual: f64 },
    #[error("mountain pass needs the valley below the minimizer: {valley} >= {minimizer}")]
    ValleyNotLower { valley: f64, minimizer: f64 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    Minimizer,
    MountainPass,
    Other,
}

/// A converged critical loop with its diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPoint {
    #[serde(rename = "loop")]
    pub loop_path: LoopPath,
    pub k: f64,
    pub value: f64,
    /// Largest pointwise discrete Euler–Lagrange defect.
    pub ode_residual: f64,
    #[serde(rename = "dSdT")]
    pub d_period: f64,
    pub grad_norm: f64,
    pub index: usize,
    pub nullity: usize,
    pub morse: MorseData,
    pub kind: CriticalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Convergence threshold on the largest discrete Euler–Lagrange defect
    /// and on `|∂S/∂T|`.
    pub tol_residual: f64,
    /// Defect below which descent hands over to Newton refinement.
    pub newton_switch: f64,
    pub max_iters: usize,
    pub newton_iters: usize,
    /// Arclength reparametrization period of the descent, in iterations.
    pub reparam_every: usize,
    pub period_floor: f64,
    pub period_cap: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-7,
            newton_switch: 1e-3,
            max_iters: 20_000,
            newton_iters: 30,
            reparam_every: 100,
            period_floor: 1e-3,
            period_cap: 1e3,
        }
    }
}
