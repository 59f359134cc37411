use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::VarianceKind;

/// How the mixing weight is chosen for each training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSampling {
    /// Use `alpha` as given.
    Fixed,
    /// Draw alpha from `Beta(beta, beta)` every step.
    Beta { beta: f64 },
}

/// Base loss applied to mixed logits against smoothed labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerBase {
    #[default]
    Focal,
    SoftmaxCrossEntropy,
}

/// Whether gradients flow through the cross-layer variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyGradient {
    #[default]
    Full,
    Stop,
}

/// Hyperparameters for the loss kernels and the synthetic trainer.
///
/// Every field has a default, so a config file only needs the fields it
/// changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Own-query mixing weight; the prototype gets `1 - alpha`.
    pub alpha: f64,
    pub alpha_sampling: AlphaSampling,
    /// Weight of the mixing regularizer.
    pub lambda_reg: f64,
    pub focal_gamma: f64,
    pub bins: usize,
    pub iou_k: f64,
    pub seed: u64,
    pub regularizer: RegularizerBase,
    pub uncertainty_gradient: UncertaintyGradient,
    pub variance: VarianceKind,
    /// Apply logit modulation when scoring, not only in the loss.
    pub modulate_at_eval: bool,

    pub step_size: f64,
    pub epochs: usize,
    pub n_scenes: usize,
    pub n_test_scenes: usize,
    pub queries: usize,
    pub classes: usize,
    pub layers: usize,
    pub features: usize,
    pub hidden: usize,
    pub flip_noise: f64,
    /// Start every decoder head from the same weights.
    pub identical_layer_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            alpha_sampling: AlphaSampling::Fixed,
            lambda_reg: 0.5,
            focal_gamma: 2.0,
            bins: 10,
            iou_k: 0.5,
            seed: 0,
            regularizer: RegularizerBase::Focal,
            uncertainty_gradient: UncertaintyGradient::Full,
            variance: VarianceKind::Population,
            modulate_at_eval: false,
            step_size: 0.05,
            epochs: 300,
            n_scenes: 200,
            n_test_scenes: 200,
            queries: 8,
            classes: 4,
            layers: 3,
            features: 16,
            hidden: 16,
            flip_noise: 0.2,
            identical_layer_init: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if let AlphaSampling::Beta { beta } = self.alpha_sampling {
            if !(beta > 0.0 && beta.is_finite()) {
                return bad(format!("beta must be positive, got {beta}"));
            }
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return bad(format!("lambda_reg must be >= 0, got {}", self.lambda_reg));
        }
        if !(self.focal_gamma >= 0.0 && self.focal_gamma.is_finite()) {
            return bad(format!("focal_gamma must be >= 0, got {}", self.focal_gamma));
        }
        if self.bins == 0 {
            return bad("bins must be >= 1".into());
        }
        if !(self.iou_k > 0.0 && self.iou_k <= 1.0) {
            return bad(format!("iou_k must lie in (0, 1], got {}", self.iou_k));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size must be positive, got {}", self.step_size));
        }
        if self.layers < 2 {
            return bad("layers must be >= 2".into());
        }
        if self.queries < 2 || self.classes < 2 {
            return bad("queries and classes must be >= 2".into());
        }
        if self.features == 0 || self.hidden == 0 || self.n_scenes == 0 || self.n_test_scenes == 0 {
            return bad("features, hidden, n_scenes and n_test_scenes must be positive".into());
        }
        if !(0.0..0.5).contains(&self.flip_noise) {
            return bad(format!("flip_noise must lie in [0, 0.5), got {}", self.flip_noise));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: TrainConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { path: field, message } => Error::Parse {
                path: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
