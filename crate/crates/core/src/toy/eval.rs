use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::SyntheticScene;
use super::model::ToyModel;
use crate::calibration::modulation::certainty;
use crate::calibration::TrainConfig;
use crate::error::{Error, Result};
use crate::metrics::{BinAccumulator, CalibrationReport, MetricKind};
use crate::numeric;

/// Scored positive query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub confidence: f64,
    pub correct: bool,
    /// `tanh` of the cross-layer variance at the predicted class, in [0, 1].
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEvaluation {
    pub d_ece: CalibrationReport,
    pub d_uce: CalibrationReport,
    pub accuracy: f64,
    pub samples: Vec<QueryScore>,
}

/// Scores every positive query of every scene. Confidence is the highest
/// per-class sigmoid of the final layer; a query is correct when that
/// class equals the (observed) label.
pub fn score_queries(model: &ToyModel, scenes: &[SyntheticScene], modulate: bool) -> Result<Vec<QueryScore>> {
    let per_scene: Vec<Result<Vec<QueryScore>>> = scenes
        .par_iter()
        .map(|scene| {
            let fwd = model.forward(std::slice::from_ref(scene))?;
            let u = fwd.stack.variance_along_first_axis()?;
            let layers = fwd.stack.shape()[0];
            let last = fwd.stack.index_first(layers - 1);
            let classes = model.classes();
            Ok(scene
                .gt_assignment
                .iter()
                .zip(&scene.gt_classes)
                .map(|(&q, &label)| {
                    let row = &last.data()[q * classes..(q + 1) * classes];
                    let urow = &u.data()[q * classes..(q + 1) * classes];
                    let (best, logit) = row
                        .iter()
                        .zip(urow)
                        .map(|(&o, &u)| if modulate { o * certainty(u) } else { o })
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
                    QueryScore {
                        confidence: numeric::sigmoid(logit),
                        correct: best == label,
                        uncertainty: urow[best].tanh(),
                    }
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for s in per_scene {
        out.extend(s?);
    }
    Ok(out)
}

/// D-ECE, D-UCE and accuracy over the positive queries of `scenes`.
pub fn evaluate_toy(model: &ToyModel, scenes: &[SyntheticScene], cfg: &TrainConfig, modulate: bool) -> Result<ToyEvaluation> {
    let samples = score_queries(model, scenes, modulate)?;
    evaluate_scores(samples, cfg.bins)
}

pub fn evaluate_scores(samples: Vec<QueryScore>, bins: usize) -> Result<ToyEvaluation> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut conf = BinAccumulator::new(MetricKind::DEce, bins)?;
    let mut unc = BinAccumulator::new(MetricKind::DUce, bins)?;
    for s in &samples {
        conf.push(s.confidence, s.correct, 0.0)?;
        unc.push(s.uncertainty, s.correct, s.confidence)?;
    }
    let accuracy = samples.iter().filter(|s| s.correct).count() as f64 / samples.len() as f64;
    Ok(ToyEvaluation {
        d_ece: conf.finish()?,
        d_uce: unc.finish()?,
        accuracy,
        samples,
    })
}
