use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, CliResult};
use crate::capture::{NON_IOT_LABEL, UNMAPPED_LABEL};
use crate::classify::{ExperimentConfig, ThresholdGrid};
use crate::dataset::SplitPolicy;
use crate::nn::{InitSpec, TrainingConfig, DEFAULT_HIDDEN_WIDTH};

/// Every knob of a pipeline run. Loaded from `--config` JSON, then
/// overridden by command-line flags; the resolved value is written into
/// each run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mac_map: Option<PathBuf>,
    pub collapse_non_iot: bool,
    pub label_order: Option<Vec<String>>,
    /// Devices need strictly more sessions than this to be kept.
    pub min_sessions: Option<usize>,
    pub split: SplitPolicy,
    pub hidden_width: usize,
    pub init: InitSpec,
    pub training: TrainingConfig,
    pub selection_epochs: Option<usize>,
    pub strict: bool,
    pub threshold_grid_step: f64,
    /// Labels dropped before unknown-device experiments.
    pub non_iot_labels: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mac_map: None,
            collapse_non_iot: false,
            label_order: None,
            min_sessions: None,
            split: SplitPolicy::default(),
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            init: InitSpec::default(),
            training: TrainingConfig::default(),
            selection_epochs: None,
            strict: false,
            threshold_grid_step: 0.01,
            non_iot_labels: vec![NON_IOT_LABEL.to_string(), UNMAPPED_LABEL.to_string()],
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Use one seed for splitting, initialization and shuffling.
    pub fn set_seed(&mut self, seed: u64) {
        self.split.rng_seed = seed;
        self.init.seed = seed;
        self.training.shuffle_seed = seed;
    }

    pub fn validate(&self) -> CliResult<()> {
        if let Some(p) = &self.mac_map {
            if !p.exists() {
                return Err(CliError::usage(format!("MAC map {} does not exist", p.display())));
            }
        }
        self.split.validate().map_err(CliError::usage)?;
        self.training.validate().map_err(CliError::usage)?;
        if self.selection_epochs == Some(0) {
            return Err(CliError::usage("selection epochs must be at least 1"));
        }
        if self.hidden_width == 0 {
            return Err(CliError::usage("hidden width must be at least 1"));
        }
        if self.init.stddev.is_nan() || self.init.stddev <= 0.0 {
            return Err(CliError::usage("init stddev must be positive"));
        }
        ThresholdGrid::from_step(self.threshold_grid_step).map_err(CliError::usage)?;
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            hidden_width: self.hidden_width,
            init: self.init,
            training: self.training,
            selection_epochs: self.selection_epochs,
            strict: self.strict,
            threshold_grid_step: self.threshold_grid_step,
        }
    }
}
