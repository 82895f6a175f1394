//! Experiment driver behind the `maglab` binary. Each subcommand reads an
//! [`ExperimentConfig`], writes its data files and a `manifest.json` into
//! the output directory, and returns the lines to print.

mod commands;
mod config;

pub use commands::{cmd_critical_values, cmd_find_orbits, cmd_flow, cmd_scan, cmd_selftest, run, Command, Outcome};
pub use config::{
    DiscretizationConfig, EnergyConfig, ExperimentConfig, FieldChoice, FlowConfig, GridRange, OutputConfig,
    RunManifest, SearchConfig, SystemConfig, ToleranceConfig,
};

use std::path::PathBuf;

use crate::action::ActionError;
use crate::dynamics::DynamicsError;
use crate::geometry::GeometryError;
use crate::search::SearchError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("{}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}

/// Command-line overrides applied on top of the file configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub allow_partial: bool,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output.dir = out.clone();
        }
        config.output.allow_partial |= self.allow_partial;
    }
}
