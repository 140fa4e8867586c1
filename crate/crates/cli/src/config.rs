//! Optional `key = value` run configuration. Command-line flags win over
//! file values, which win over defaults.

use std::path::Path;

use multichannel::optimizer::{CeConfig, CostModel};
use multichannel::GadgetParams;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    /// Monte Carlo replications per estimate.
    pub reps: Option<u64>,
    pub budget: Option<f64>,
    /// Per-product budgets for best responses.
    pub budgets: Option<Vec<f64>>,
    pub focal: Option<usize>,
    pub rounds: Option<usize>,
    pub horizon: Option<usize>,
    pub seed_cost: Option<f64>,
    pub alpha_cost: Option<f64>,
    pub beta_cost: Option<f64>,
    pub samples: Option<usize>,
    pub elite_fraction: Option<f64>,
    pub smoothing: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub weighted_update: Option<bool>,
    pub chi_w: Option<f64>,
    pub epsilon: Option<f64>,
    pub grid: Option<usize>,
    pub trials: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn cost_model(&self) -> CostModel {
        let d = CostModel::default();
        CostModel {
            seed_unit_cost: self.seed_cost.unwrap_or(d.seed_unit_cost),
            alpha_unit_cost: self.alpha_cost.unwrap_or(d.alpha_unit_cost),
            beta_unit_cost: self.beta_cost.unwrap_or(d.beta_unit_cost),
        }
    }

    pub fn gadget(&self) -> GadgetParams {
        let d = GadgetParams::default();
        GadgetParams {
            chi_w: self.chi_w.unwrap_or(d.chi_w),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            ..d
        }
    }

    pub fn ce_config(&self, reps: Option<u64>, horizon: usize) -> CeConfig {
        let d = CeConfig::default();
        CeConfig {
            samples: self.samples.or(d.samples),
            elite_fraction: self.elite_fraction.unwrap_or(d.elite_fraction),
            smoothing: self.smoothing.unwrap_or(d.smoothing),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            replications: reps.or(self.reps).unwrap_or(d.replications),
            weighted_update: self.weighted_update.unwrap_or(d.weighted_update),
            horizon,
            gadget: self.gadget(),
            ..d
        }
    }
}
