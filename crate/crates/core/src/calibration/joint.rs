//! Mixing regularizer and the combined classification objective over a
//! decoder logit stack.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{RegularizerBase, TrainConfig, UncertaintyGradient};
use super::focal::{focal_row, softmax_ce_row};
use super::mixing::{mix_logits, mix_logits_backward, smoothed_labels, PositiveQuerySet, SmoothedLabel};
use super::modulation::certainty;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::tensor::{Tensor, VarianceKind};

/// Which calibration mechanisms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Focal loss only.
    Baseline,
    /// Uncertainty-guided modulation, no mixing regularizer.
    ModOnly,
    /// Mixing regularizer on unmodulated logits.
    MixOnly,
    /// Both mechanisms.
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Baseline,
        Ablation::ModOnly,
        Ablation::MixOnly,
        Ablation::Full,
    ];

    pub fn modulates(self) -> bool {
        matches!(self, Ablation::ModOnly | Ablation::Full)
    }

    pub fn mixes(self) -> bool {
        matches!(self, Ablation::MixOnly | Ablation::Full)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::ModOnly => "mod_only",
            Ablation::MixOnly => "mix_only",
            Ablation::Full => "full",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode {s:?}")))
    }
}

/// Output of [`regularizer_loss`].
#[derive(Debug, Clone)]
pub struct RegularizerOutput {
    pub loss: f64,
    /// Gradient with respect to the unmixed query rows.
    pub grad: Vec<Tensor>,
}

fn base_row(base: RegularizerBase, logits: &[f64], target: &[f64], gamma: f64, grad: &mut [f64]) -> f64 {
    match base {
        RegularizerBase::Focal => focal_row(logits, target, gamma, grad),
        RegularizerBase::SoftmaxCrossEntropy => softmax_ce_row(logits, target, grad),
    }
}

/// Mixes the positive-query rows, scores them against smoothed labels and
/// returns the mean loss with its gradient on the unmixed rows.
pub fn regularizer_loss(
    queries: &[Tensor],
    labels: &[SmoothedLabel],
    alpha: f64,
    gamma: f64,
    base: RegularizerBase,
) -> Result<RegularizerOutput> {
    if queries.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "mixed logits vs labels",
            left: queries.len(),
            right: labels.len(),
        });
    }
    let mixed = mix_logits(queries, alpha)?;
    let n = queries.len() as f64;
    let mut loss = CompensatedSum::new();
    let mut grad_mixed = Vec::with_capacity(mixed.len());
    for (row, label) in mixed.iter().zip(labels) {
        if row.shape() != label.weights().shape() {
            return Err(Error::ShapeMismatch {
                left: row.shape().to_vec(),
                right: label.weights().shape().to_vec(),
            });
        }
        let mut g = vec![0.0; row.len()];
        loss.add(base_row(base, row.data(), label.weights().data(), gamma, &mut g));
        grad_mixed.push(Tensor::vector(g.into_iter().map(|v| v / n).collect())?);
    }
    Ok(RegularizerOutput {
        loss: loss.value() / n,
        grad: mix_logits_backward(&grad_mixed, alpha)?,
    })
}

/// Settings for [`joint_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLossSettings {
    pub alpha: f64,
    pub lambda_reg: f64,
    pub gamma: f64,
    pub modulate: bool,
    pub mix: bool,
    pub uncertainty_gradient: UncertaintyGradient,
    pub regularizer: RegularizerBase,
    pub variance: VarianceKind,
}

impl JointLossSettings {
    pub fn new(cfg: &TrainConfig, mode: Ablation) -> Self {
        Self {
            alpha: cfg.alpha,
            lambda_reg: cfg.lambda_reg,
            gamma: cfg.focal_gamma,
            modulate: mode.modulates(),
            mix: mode.mixes(),
            uncertainty_gradient: cfg.uncertainty_gradient,
            regularizer: cfg.regularizer,
            variance: cfg.variance,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

#[derive(Debug, Clone)]
pub struct JointLossOutput {
    /// `cls + lambda * reg`.
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
    /// Gradient of `total` with respect to the whole `L x M x Q x C` stack.
    pub grad: Tensor,
}

/// Hard targets for image `m`: one-hot rows for positives, zeros elsewhere.
fn hard_targets(set: &PositiveQuerySet, queries: usize, classes: usize) -> Vec<f64> {
    let mut t = vec![0.0; queries * classes];
    for (&q, &c) in set.indices().iter().zip(set.classes()) {
        t[q * classes + c] = 1.0;
    }
    t
}

fn stack_dims(stack: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *stack.shape() {
        [l, m, q, c] => {
            if l < 2 {
                return Err(Error::InsufficientLayers(l));
            }
            Ok((l, m, q, c))
        }
        _ => Err(Error::InvalidShape {
            shape: stack.shape().to_vec(),
            reason: "expected an L x M x Q x C logit stack".into(),
        }),
    }
}

/// Classification objective over a decoder logit stack.
///
/// The final layer is the last slice of `stack`. With modulation on it is
/// scaled by `1 - tanh(u)`, `u` being the cross-layer variance. The focal
/// loss over all queries (negatives target all zeros) is normalized by
/// the number of positives in the batch. With mixing on, the regularizer
/// is the mean loss over positive queries of their mixed rows against
/// smoothed labels, prototypes formed per image.
///
/// The gradient covers every layer of the stack: the final layer directly
/// and, unless `uncertainty_gradient` is `Stop`, every layer through `u`.
pub fn joint_loss(
    stack: &Tensor,
    assignments: &[PositiveQuerySet],
    settings: &JointLossSettings,
) -> Result<JointLossOutput> {
    let (layers, batch, queries, classes) = stack_dims(stack)?;
    if assignments.len() != batch {
        return Err(Error::LengthMismatch {
            what: "assignments vs mini-batch",
            left: assignments.len(),
            right: batch,
        });
    }
    for a in assignments {
        a.validate(queries, classes)?;
    }

    let inner = batch * queries * classes;
    let last = &stack.data()[(layers - 1) * inner..];

    let uncertainty = if settings.modulate {
        Some(stack.variance_along_first_axis_with(settings.variance)?)
    } else {
        None
    };
    let logits: Vec<f64> = match &uncertainty {
        Some(u) => last.iter().zip(u.data()).map(|(&o, &u)| o * certainty(u)).collect(),
        None => last.to_vec(),
    };

    let positives: usize = assignments.iter().map(PositiveQuerySet::len).sum();
    let norm = positives.max(1) as f64;
    let row_len = queries * classes;

    // gradient with respect to the (possibly modulated) final logits
    let mut grad_logits = vec![0.0; inner];
    let mut cls = CompensatedSum::new();
    for (m, set) in assignments.iter().enumerate() {
        let targets = hard_targets(set, queries, classes);
        let span = m * row_len..(m + 1) * row_len;
        let g = &mut grad_logits[span.clone()];
        cls.add(focal_row(&logits[span], &targets, settings.gamma, g));
    }
    let cls = cls.value() / norm;
    for g in grad_logits.iter_mut() {
        *g /= norm;
    }

    let mut reg = CompensatedSum::new();
    if settings.mix && positives > 0 {
        for (m, set) in assignments.iter().enumerate().filter(|(_, s)| !s.is_empty()) {
            let rows = set
                .indices()
                .iter()
                .map(|&q| {
                    let start = (m * queries + q) * classes;
                    Tensor::vector(logits[start..start + classes].to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            let labels = smoothed_labels(set, settings.alpha, classes)?;
            let out = regularizer_loss(&rows, &labels, settings.alpha, settings.gamma, settings.regularizer)?;
            // regularizer_loss averages within the image; reweight to a batch mean
            let weight = set.len() as f64 / positives as f64;
            reg.add(out.loss * weight);
            let scale = settings.lambda_reg * weight;
            for (&q, g) in set.indices().iter().zip(&out.grad) {
                let start = (m * queries + q) * classes;
                for (dst, &src) in grad_logits[start..start + classes].iter_mut().zip(g.data()) {
                    *dst += scale * src;
                }
            }
        }
    }
    let reg = reg.value();

    let mut grad = vec![0.0; stack.len()];
    match &uncertainty {
        None => grad[(layers - 1) * inner..].copy_from_slice(&grad_logits),
        Some(u) => {
            let divisor = match settings.variance {
                VarianceKind::Population => layers as f64,
                VarianceKind::Sample => (layers - 1) as f64,
            };
            let data = stack.data();
            for pos in 0..inner {
                let g = grad_logits[pos];
                let uu = u.data()[pos];
                grad[(layers - 1) * inner + pos] += g * certainty(uu);
                if settings.uncertainty_gradient == UncertaintyGradient::Stop || g == 0.0 {
                    continue;
                }
                let mean = (0..layers).map(|l| data[l * inner + pos]).sum::<f64>() / layers as f64;
                let th = uu.tanh();
                // d(certainty)/du = -(1 - tanh^2 u)
                let du = -g * last[pos] * (1.0 - th * th);
                for l in 0..layers {
                    grad[l * inner + pos] += du * 2.0 * (data[l * inner + pos] - mean) / divisor;
                }
            }
        }
    }

    Ok(JointLossOutput {
        total: cls + settings.lambda_reg * reg,
        cls,
        reg,
        grad: Tensor::new(stack.shape().to_vec(), grad)?,
    })
}
