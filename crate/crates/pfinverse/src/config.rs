//! JSON run configuration: one schema for every batch command.
//!
//! A config names the grid, the model parameters, the time horizon, and one
//! block per command that needs extra knobs. Unknown keys are rejected, and
//! every command writes the parsed config back into its output directory so
//! a run can be replayed exactly.

use crate::forward::{SolverError, TimeGrid};
use crate::grid::{Grid, GridError};
use crate::inverse::ReconstructionConfig;
use crate::model::ModelParams;
use crate::phantom::PhantomSpec;
use crate::stability::StabilityStudyConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("time grid: {0}")]
    Time(#[from] SolverError),
    #[error("config: {0}")]
    Invalid(String),
}

/// Grid block: `n` and `spacing` arrays of matching length 1 or 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    pub spacing: Vec<f64>,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid, ConfigError> {
        if self.n.len() != self.spacing.len() {
            return Err(ConfigError::Invalid(format!(
                "grid `n` has {} entries but `spacing` has {}",
                self.n.len(),
                self.spacing.len()
            )));
        }
        let g = match self.n.len() {
            1 => Grid::new_1d(self.n[0], self.spacing[0])?,
            2 => Grid::new_2d(self.n[0], self.n[1], self.spacing[0], self.spacing[1])?,
            d => return Err(ConfigError::Grid(GridError::BadDim(d))),
        };
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeConfig {
    pub fn build(&self) -> Result<TimeGrid, ConfigError> {
        Ok(TimeGrid::new(self.t_final, self.n_steps)?)
    }
}

/// Where the initial state of a forward run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Synthetic lesion via the phantom generator.
    Phantom(PhantomSpec),
    /// Healthy tissue: no tumour, nutrient and PSA at host steady levels.
    Healthy,
    /// Binary field files.
    Files {
        phi: String,
        sigma: String,
        psa: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// Snapshot count hint; the default keeps about 32.
    #[serde(default)]
    pub snapshot_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomBlock {
    pub spec: PhantomSpec,
    /// Additive noise level relative to each field's sup norm; 0 = clean.
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

/// Which diagnostic `check` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Taylor,
    Adjoint,
    Opnorm,
    Convergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBlock {
    pub which: CheckKind,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub probe_seed: u64,
    #[serde(default = "default_directions")]
    pub directions: usize,
}

fn default_pairs() -> usize {
    50
}

fn default_directions() -> usize {
    8
}

/// Synthetic or file-based terminal measurement for reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementData {
    /// Generate the truth, push it forward, add noise. The measured noise
    /// norm becomes the discrepancy level.
    Synthetic {
        phantom: PhantomSpec,
        #[serde(default)]
        noise_level: f64,
        #[serde(default)]
        noise_seed: u64,
    },
    Files {
        phi: String,
        sigma: String,
        psa: String,
    },
}

/// Where the Landweber iteration starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuessPolicy {
    /// No tumour, nutrient and PSA at their host steady levels.
    #[default]
    Healthy,
    /// All three fields zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructBlock {
    pub data: MeasurementData,
    #[serde(default)]
    pub config: ReconstructionConfig,
    #[serde(default)]
    pub initial_guess: InitialGuessPolicy,
    /// Trial-subspace order per axis; 0 reconstructs on the full grid.
    #[serde(default)]
    pub subspace_per_axis: usize,
    /// Uniform admissible bounds; defaults derive from the parameters.
    #[serde(default)]
    pub sigma_max: Option<f64>,
    #[serde(default)]
    pub psa_max: Option<f64>,
    /// Optional phantom-seed fan-out; each seed runs in its own directory.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruct: Option<ReconstructBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityStudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_checked(&text)
    }

    pub fn from_str_checked(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.params
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.grid.build()?;
        cfg.time.build()?;
        Ok(cfg)
    }

    /// Serialises the parsed config; `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialisation cannot fail")
    }
}
