//! Synthetic multi-layer detector head for comparing the calibration
//! mechanisms end to end.
//!
//! Boxes are not modeled: a positive query counts as correct when its top
//! class matches the label. Each experiment generates one dataset from
//! the seed, trains on the first `n_scenes` scenes and evaluates on the
//! following `n_test_scenes`.

pub mod data;
pub mod eval;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

pub use data::{generate_dataset, SceneSpec, SyntheticScene};
pub use eval::{evaluate_toy, QueryScore, ToyEvaluation};
pub use model::ToyModel;
pub use train::{train, EpochLoss, TrainOutcome};

use crate::calibration::{Ablation, TrainConfig};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub mode: Ablation,
    pub seed: u64,
    pub model: ToyModel,
    pub trace: Vec<EpochLoss>,
    pub evaluation: ToyEvaluation,
}

/// Train/test split shared by every mode for a given seed.
pub fn experiment_data(cfg: &TrainConfig) -> Result<(Vec<SyntheticScene>, Vec<SyntheticScene>)> {
    let spec = SceneSpec::new(cfg.queries, cfg.classes, cfg.features, cfg.flip_noise);
    let mut scenes = generate_dataset(cfg.n_scenes + cfg.n_test_scenes, &spec, cfg.seed)?;
    let test = scenes.split_off(cfg.n_scenes);
    Ok((scenes, test))
}

pub fn initial_model(cfg: &TrainConfig) -> Result<ToyModel> {
    ToyModel::new(
        cfg.features,
        cfg.hidden,
        cfg.classes,
        cfg.layers,
        cfg.identical_layer_init,
        cfg.seed.wrapping_add(1),
    )
}

/// Trains one mode and evaluates it on the held-out scenes.
pub fn run_experiment(cfg: &TrainConfig, mode: Ablation) -> Result<ExperimentRun> {
    cfg.validate()?;
    let (train_set, test_set) = experiment_data(cfg)?;
    let outcome = train(initial_model(cfg)?, &train_set, cfg, mode)?;
    let evaluation = evaluate_toy(
        &outcome.model,
        &test_set,
        cfg,
        cfg.modulate_at_eval && mode.modulates(),
    )?;
    Ok(ExperimentRun {
        mode,
        seed: cfg.seed,
        model: outcome.model,
        trace: outcome.trace,
        evaluation,
    })
}

/// One row of the ablation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub mode: Ablation,
    pub d_ece: f64,
    pub d_uce: f64,
    pub accuracy: f64,
    /// Per-seed D-ECE, in seed order.
    pub per_seed_d_ece: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub seeds: Vec<u64>,
    pub entries: Vec<AblationEntry>,
}

impl AblationSummary {
    pub fn entry(&self, mode: Ablation) -> Option<&AblationEntry> {
        self.entries.iter().find(|e| e.mode == mode)
    }
}

/// Averages per-seed runs into one entry per mode. `runs` holds, for each
/// mode, the runs in seed order.
pub fn summarize(seeds: &[u64], runs: &[(Ablation, Vec<ExperimentRun>)]) -> AblationSummary {
    let entries = runs
        .iter()
        .map(|(mode, runs)| {
            let n = runs.len().max(1) as f64;
            let per_seed_d_ece: Vec<f64> = runs.iter().map(|r| r.evaluation.d_ece.error).collect();
            AblationEntry {
                mode: *mode,
                d_ece: per_seed_d_ece.iter().sum::<f64>() / n,
                d_uce: runs.iter().map(|r| r.evaluation.d_uce.error).sum::<f64>() / n,
                accuracy: runs.iter().map(|r| r.evaluation.accuracy).sum::<f64>() / n,
                per_seed_d_ece,
            }
        })
        .collect();
    AblationSummary {
        seeds: seeds.to_vec(),
        entries,
    }
}

/// Runs all four modes over `seeds` and averages the metrics per mode.
pub fn run_ablation(cfg: &TrainConfig, seeds: &[u64]) -> Result<AblationSummary> {
    let runs = Ablation::ALL
        .iter()
        .map(|&mode| {
            let runs = seeds
                .iter()
                .map(|&seed| run_experiment(&TrainConfig { seed, ..cfg.clone() }, mode))
                .collect::<Result<Vec<_>>>()?;
            Ok((mode, runs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(seeds, &runs))
}
