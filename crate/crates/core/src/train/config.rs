use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a candidate's weights are optimized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Backbone pre-training, then the composite early-exit objective.
    #[default]
    Staged,
    /// Weighted sum of per-exit cross-entropies over all epochs.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Epochs of the backbone, early-exit and calibration phases.
    pub epochs: [usize; 3],
    /// Weights of the accuracy, cost and peak terms.
    pub weights: [f64; 3],
    pub lambda_e: f64,
    pub mode: TrainMode,
    /// Minimum top-1 fraction.
    pub min_accuracy: f64,
    /// Maximum adaptive MACs per sample; `None` disables the cost constraint.
    pub max_macs: Option<f64>,
    pub support_per_class: usize,
    pub exit_regularizer: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: [10, 5, 5],
            weights: [1.0, 1.0, 1.0],
            lambda_e: 1.0,
            mode: TrainMode::Staged,
            min_accuracy: 0.65,
            max_macs: Some(2.7e6),
            support_per_class: 10,
            exit_regularizer: true,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Short schedule for the 16×16 synthetic task, with the desk search constraints.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: [4, 2, 2],
            min_accuracy: 0.8,
            max_macs: Some(0.45e6),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            bad.push(format!(
                "weights {:?} must be finite and non-negative",
                self.weights
            ));
        }
        if !(self.lambda_e.is_finite() && self.lambda_e >= 0.0) {
            bad.push(format!("lambda_e {} must be non-negative", self.lambda_e));
        }
        if !(self.min_accuracy > 0.0 && self.min_accuracy < 1.0) {
            bad.push(format!(
                "min_accuracy {} must lie in (0, 1)",
                self.min_accuracy
            ));
        }
        if let Some(m) = self.max_macs {
            if !(m.is_finite() && m > 0.0) {
                bad.push(format!("max_macs {m} must be positive"));
            }
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be positive".into());
        }
        if self.support_per_class == 0 {
            bad.push("support_per_class must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            bad.push(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(bad))
        }
    }
}
