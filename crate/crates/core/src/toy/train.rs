use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::data::SyntheticScene;
use super::model::ToyModel;
use crate::calibration::focal::focal_row;
use crate::calibration::joint::{joint_loss, Ablation, JointLossSettings};
use crate::calibration::{AlphaSampling, PositiveQuerySet, TrainConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Loss components recorded once per epoch, before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
    pub aux: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub trace: Vec<EpochLoss>,
}

/// Objective value and gradient on the logit stack for one batch.
///
/// The ablation's objective applies to the final layer; every earlier
/// layer also gets a plain focal loss on its raw logits (deep
/// supervision), normalized by the number of positives like the main term.
pub fn training_objective(
    stack: &Tensor,
    assignments: &[PositiveQuerySet],
    settings: &JointLossSettings,
) -> Result<(EpochLoss, Tensor)> {
    let out = joint_loss(stack, assignments, settings)?;
    let mut grad = out.grad.into_data();
    let (layers, batch, queries, classes) = match *stack.shape() {
        [l, m, q, c] => (l, m, q, c),
        _ => unreachable!("joint_loss validated the shape"),
    };
    let inner = batch * queries * classes;
    let positives: usize = assignments.iter().map(PositiveQuerySet::len).sum();
    let norm = positives.max(1) as f64;
    let mut aux = 0.0;
    let mut row_grad = vec![0.0; classes];
    for layer in 0..layers - 1 {
        for (m, set) in assignments.iter().enumerate() {
            for q in 0..queries {
                let mut target = vec![0.0; classes];
                if let Some(k) = set.indices().iter().position(|&i| i == q) {
                    target[set.classes()[k]] = 1.0;
                }
                let start = layer * inner + (m * queries + q) * classes;
                aux += focal_row(&stack.data()[start..start + classes], &target, settings.gamma, &mut row_grad);
                for (g, rg) in grad[start..start + classes].iter_mut().zip(&row_grad) {
                    *g += rg / norm;
                }
            }
        }
    }
    let aux = aux / norm;
    Ok((
        EpochLoss {
            epoch: 0,
            total: out.total + aux,
            cls: out.cls,
            reg: out.reg,
            aux,
            alpha: settings.alpha,
        },
        Tensor::new(stack.shape().to_vec(), grad)?,
    ))
}

/// Full-batch gradient descent with a fixed step.
pub fn train(
    mut model: ToyModel,
    scenes: &[SyntheticScene],
    cfg: &TrainConfig,
    mode: Ablation,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let assignments: Vec<PositiveQuerySet> = scenes.iter().map(SyntheticScene::positives).collect();
    let base = JointLossSettings::new(cfg, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a1fa);
    let beta = match cfg.alpha_sampling {
        AlphaSampling::Fixed => None,
        AlphaSampling::Beta { beta } => Some(
            Beta::new(beta, beta).map_err(|e| Error::InvalidConfig(e.to_string()))?,
        ),
    };

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let alpha = match &beta {
            Some(dist) => dist.sample(&mut rng).clamp(1e-3, 1.0),
            None => cfg.alpha,
        };
        let settings = base.with_alpha(alpha);
        let fwd = model.forward(scenes)?;
        let (mut loss, grad_stack) = training_objective(&fwd.stack, &assignments, &settings)?;
        if !loss.total.is_finite() || loss.total > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { epoch, loss: loss.total });
        }
        loss.epoch = epoch;
        trace.push(loss);
        let grad = model.backward(scenes, &fwd, &grad_stack)?;
        model.descend(&grad, cfg.step_size)?;
    }
    Ok(TrainOutcome { model, trace })
}

/// Means over consecutive windows of the total loss.
pub fn windowed_means(trace: &[EpochLoss], window: usize) -> Vec<f64> {
    trace
        .chunks(window)
        .filter(|c| c.len() == window)
        .map(|c| c.iter().map(|e| e.total).sum::<f64>() / window as f64)
        .collect()
}

pub fn write_trace_csv<W: std::io::Write>(trace: &[EpochLoss], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in trace {
        w.serialize(e).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}
