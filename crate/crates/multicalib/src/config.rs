//! Run configuration for the pseudolabel driver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Function class used when refitting the predictor on pseudolabels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitClass {
    /// Affine functions of the features.
    Linear,
    /// All functions of the frozen base predictor's bin index, i.e. a
    /// per-bin constant table. This class contains every per-bin constant,
    /// so recalibration against a constant grouping basis is exact.
    BinTable,
}

/// Knobs of one driver run.
///
/// `stop_epsilon = None` resolves to `1e-6 * var(y)` on the training
/// targets at run time; the resolved value is recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_iters: usize,
    pub stop_epsilon: Option<f64>,
    /// When true, only `gap <= stop_epsilon` stops the run (besides the
    /// iteration cap); the non-improvement test is skipped.
    pub strict_stopping: bool,
    pub ridge_lambda: f64,
    pub seed: u64,
    /// Grid-round predictions (true) or use their exact distinct values as
    /// level sets (false, for predictors that are already finite-range).
    pub discretize: bool,
    pub min_bins: usize,
    pub min_bin_count: usize,
    pub coverage_fraction: f64,
    pub refit: RefitClass,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iters: 50,
            stop_epsilon: None,
            strict_stopping: false,
            ridge_lambda: 0.0,
            seed: 0,
            discretize: true,
            min_bins: 10,
            min_bin_count: 30,
            coverage_fraction: 0.9,
            refit: RefitClass::Linear,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be positive".into()));
        }
        if let Some(eps) = self.stop_epsilon {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::Validation("stop_epsilon must be finite and >= 0".into()));
            }
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::Validation("ridge_lambda must be finite and >= 0".into()));
        }
        if self.min_bins == 0 || self.min_bin_count == 0 {
            return Err(Error::Validation("min_bins and min_bin_count must be positive".into()));
        }
        if !(self.coverage_fraction > 0.0 && self.coverage_fraction <= 1.0) {
            return Err(Error::Validation("coverage_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// The stopping threshold for a given target variance.
    pub fn resolve_stop_epsilon(&self, target_variance: f64) -> f64 {
        self.stop_epsilon.unwrap_or(1e-6 * target_variance)
    }
}
