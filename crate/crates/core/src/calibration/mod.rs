//! Train-time calibration kernels: uncertainty-guided logit modulation,
//! prototype logit mixing with smoothed labels, the focal loss they feed,
//! and post-hoc temperature scaling as a baseline.

pub mod config;
pub mod focal;
pub mod joint;
pub mod mixing;
pub mod modulation;
pub mod temperature;

pub use config::{AlphaSampling, RegularizerBase, TrainConfig, UncertaintyGradient};
pub use focal::{focal_loss, softmax_cross_entropy};
pub use joint::{joint_loss, regularizer_loss, Ablation, JointLossOutput, JointLossSettings, RegularizerOutput};
pub use mixing::{mix_logits, mix_logits_backward, smoothed_labels, PositiveQuerySet, SmoothedLabel};
pub use modulation::{certainty, modulate_logits, quantify_uncertainty, quantify_uncertainty_with};
pub use temperature::{apply_temperature, fit_temperature, TemperatureLink};
