use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::PositiveQuerySet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One synthetic image: a feature row per decoder query and the objects
/// assigned to a subset of the queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    /// `Q x F` query features.
    pub features: Tensor,
    /// Observed (possibly flipped) class of each object, zero-based.
    pub gt_classes: Vec<usize>,
    /// Class the features were drawn from, before label noise.
    pub clean_classes: Vec<usize>,
    /// Query index responsible for each object.
    pub gt_assignment: Vec<usize>,
    pub flip_noise: f64,
}

impl SyntheticScene {
    pub fn positives(&self) -> PositiveQuerySet {
        PositiveQuerySet::new(self.gt_assignment.clone(), self.gt_classes.clone())
            .expect("generated assignments are unique")
    }
}

/// Shape of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub queries: usize,
    pub classes: usize,
    pub features: usize,
    pub flip_noise: f64,
    /// Spread of the class centers around the origin.
    pub center_scale: f64,
    pub max_objects: usize,
}

impl SceneSpec {
    pub fn new(queries: usize, classes: usize, features: usize, flip_noise: f64) -> Self {
        Self {
            queries,
            classes,
            features,
            flip_noise,
            center_scale: 0.6,
            max_objects: 4,
        }
    }
}

/// Generates `n_scenes` scenes deterministically from `seed`.
///
/// Object queries draw features from per-class Gaussian clusters with unit
/// variance; background queries from a unit Gaussian at the origin. With
/// probability `flip_noise` an object's label is replaced by a uniformly
/// chosen different class.
pub fn generate_dataset(n_scenes: usize, spec: &SceneSpec, seed: u64) -> Result<Vec<SyntheticScene>> {
    if !(0.0..0.5).contains(&spec.flip_noise) {
        return Err(Error::InvalidArgument(format!(
            "flip_noise must lie in [0, 0.5), got {}",
            spec.flip_noise
        )));
    }
    if spec.queries < 2 || spec.classes < 2 || spec.features == 0 {
        return Err(Error::InvalidArgument("need at least 2 queries, 2 classes and 1 feature".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.features).map(|_| spec.center_scale * normal.sample(&mut rng)).collect())
        .collect();

    let max_objects = spec.max_objects.min(spec.queries).max(2);
    let mut scenes = Vec::with_capacity(n_scenes);
    for _ in 0..n_scenes {
        let n_obj = rng.random_range(2..=max_objects);
        let assignment = rand::seq::index::sample(&mut rng, spec.queries, n_obj).into_vec();
        let mut features = vec![0.0; spec.queries * spec.features];
        for v in features.iter_mut() {
            *v = normal.sample(&mut rng);
        }
        let mut clean = Vec::with_capacity(n_obj);
        let mut observed = Vec::with_capacity(n_obj);
        for &q in &assignment {
            let c = rng.random_range(0..spec.classes);
            for (f, center) in features[q * spec.features..(q + 1) * spec.features]
                .iter_mut()
                .zip(&centers[c])
            {
                *f += center;
            }
            let label = if rng.random::<f64>() < spec.flip_noise {
                let other = rng.random_range(0..spec.classes - 1);
                if other >= c { other + 1 } else { other }
            } else {
                c
            };
            clean.push(c);
            observed.push(label);
        }
        scenes.push(SyntheticScene {
            features: Tensor::new(vec![spec.queries, spec.features], features)?,
            gt_classes: observed,
            clean_classes: clean,
            gt_assignment: assignment,
            flip_noise: spec.flip_noise,
        });
    }
    Ok(scenes)
}

/// Fraction of object labels that differ from their clean class.
pub fn flip_fraction(scenes: &[SyntheticScene]) -> f64 {
    let (flipped, total) = scenes.iter().fold((0usize, 0usize), |(f, t), s| {
        let n = s.gt_classes.iter().zip(&s.clean_classes).filter(|(a, b)| a != b).count();
        (f + n, t + s.gt_classes.len())
    });
    flipped as f64 / total.max(1) as f64
}
