//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use detcal::geometry::{BBox, Detection, GroundTruth, ImageId};
use detcal::Tensor;

/// Which outcome a bin compares its mean value against.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Outcome {
    /// Fraction of positives (ECE, D-ECE).
    Positive,
    /// Fraction of negatives (D-UCE).
    Negative,
}

/// Two-loop binned calibration error: for every bin, scan all samples.
/// Bin `b` is `[b/B, (b+1)/B)`, the last one closed at 1.
pub fn binned_error_oracle(samples: &[(f64, bool)], bins: usize, outcome: Outcome) -> f64 {
    let n = samples.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let last = b + 1 == bins;
        let mut count = 0usize;
        let mut value_sum = 0.0;
        let mut hits = 0usize;
        for &(v, y) in samples {
            let inside = v >= lo && (v < hi || (last && v <= 1.0));
            if inside {
                count += 1;
                value_sum += v;
                let hit = match outcome {
                    Outcome::Positive => y,
                    Outcome::Negative => !y,
                };
                if hit {
                    hits += 1;
                }
            }
        }
        if count > 0 {
            let c = count as f64;
            total += c / n * (hits as f64 / c - value_sum / c).abs();
        }
    }
    total
}

pub fn bbox(b: [f64; 4]) -> BBox {
    BBox { x: b[0], y: b[1], w: b[2], h: b[3] }
}

pub fn det(image: i64, category: i64, b: [f64; 4], score: f64) -> Detection {
    Detection { image_id: ImageId::Int(image), category, bbox: bbox(b), score }
}

pub fn gt(image: i64, category: i64, b: [f64; 4]) -> GroundTruth {
    GroundTruth { image_id: ImageId::Int(image), category, bbox: bbox(b) }
}

/// Intersection over union from corner arithmetic, written independently
/// of the library version.
pub fn iou_oracle(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = ix.max(0.0) * iy.max(0.0);
    let union = a.w * a.h + b.w * b.h - inter;
    if union > 0.0 { inter / union } else { 0.0 }
}

/// Exhaustive search over every partial injective assignment of detections
/// to same-image, same-class ground truths with IoU at least `k`. Among
/// them it returns the outcomes of the assignment whose per-detection key
/// `(IoU, -gt index)`, read in descending score order (unmatched lowest),
/// is lexicographically largest.
pub fn exhaustive_match_oracle(dets: &[Detection], gts: &[GroundTruth], k: f64) -> Vec<u8> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    type Key = Vec<(f64, i64)>;
    let mut best: Option<(Key, Vec<Option<usize>>)> = None;
    let mut current: Vec<Option<usize>> = vec![None; dets.len()];
    let mut used = vec![false; gts.len()];

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        pos: usize,
        order: &[usize],
        dets: &[Detection],
        gts: &[GroundTruth],
        k: f64,
        used: &mut [bool],
        current: &mut Vec<Option<usize>>,
        best: &mut Option<(Key, Vec<Option<usize>>)>,
    ) {
        if pos == order.len() {
            let key: Key = order
                .iter()
                .map(|&i| match current[i] {
                    Some(j) => (iou_oracle(&dets[i].bbox, &gts[j].bbox), -(j as i64)),
                    None => (-1.0, 0),
                })
                .collect();
            let better = match best {
                None => true,
                Some((bk, _)) => key.partial_cmp(bk) == Some(std::cmp::Ordering::Greater),
            };
            if better {
                *best = Some((key, current.clone()));
            }
            return;
        }
        let i = order[pos];
        recurse(pos + 1, order, dets, gts, k, used, current, best);
        for j in 0..gts.len() {
            if used[j] || gts[j].image_id != dets[i].image_id || gts[j].category != dets[i].category {
                continue;
            }
            if iou_oracle(&dets[i].bbox, &gts[j].bbox) < k {
                continue;
            }
            used[j] = true;
            current[i] = Some(j);
            recurse(pos + 1, order, dets, gts, k, used, current, best);
            current[i] = None;
            used[j] = false;
        }
    }

    recurse(0, &order, dets, gts, k, &mut used, &mut current, &mut best);
    best.expect("the empty assignment always exists")
        .1
        .iter()
        .map(|m| u8::from(m.is_some()))
        .collect()
}

/// Largest number of detections that can be matched at threshold `k`,
/// ignoring scores.
pub fn max_cardinality_oracle(dets: &[Detection], gts: &[GroundTruth], k: f64) -> usize {
    fn go(i: usize, dets: &[Detection], gts: &[GroundTruth], k: f64, used: &mut [bool]) -> usize {
        if i == dets.len() {
            return 0;
        }
        let mut best = go(i + 1, dets, gts, k, used);
        for j in 0..gts.len() {
            if !used[j]
                && gts[j].image_id == dets[i].image_id
                && gts[j].category == dets[i].category
                && iou_oracle(&dets[i].bbox, &gts[j].bbox) >= k
            {
                used[j] = true;
                best = best.max(1 + go(i + 1, dets, gts, k, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, dets, gts, k, &mut vec![false; gts.len()])
}

/// Minimum total cost over all injective row-to-column maps (rows ≤ cols)
/// or column-to-row maps (otherwise), by enumerating permutations.
pub fn brute_force_assignment(cost: &Tensor) -> f64 {
    let (n, m) = (cost.shape()[0], cost.shape()[1]);
    let at = |i: usize, j: usize| cost.data()[i * m + j];
    fn go(i: usize, n: usize, m: usize, used: &mut [bool], at: &dyn Fn(usize, usize) -> f64, transpose: bool) -> f64 {
        if i == n {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                let c = if transpose { at(j, i) } else { at(i, j) };
                best = best.min(c + go(i + 1, n, m, used, at, transpose));
                used[j] = false;
            }
        }
        best
    }
    if n <= m {
        go(0, n, m, &mut vec![false; m], &at, false)
    } else {
        go(0, m, n, &mut vec![false; n], &at, true)
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference(x: &Tensor, eps: f64, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.data().to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = f(&Tensor::new(x.shape().to_vec(), probe.clone()).unwrap());
        probe[i] = orig - eps;
        let fm = f(&Tensor::new(x.shape().to_vec(), probe.clone()).unwrap());
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    Tensor::new(x.shape().to_vec(), grad).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute norm when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-8 { norm(&diff) } else { norm(&diff) / scale }
}

/// Population variance along the first axis by two passes over the data.
pub fn two_pass_variance(t: &Tensor) -> Vec<f64> {
    let l = t.shape()[0];
    let inner = t.len() / l;
    (0..inner)
        .map(|p| {
            let mean = (0..l).map(|i| t.data()[i * inner + p]).sum::<f64>() / l as f64;
            (0..l).map(|i| (t.data()[i * inner + p] - mean).powi(2)).sum::<f64>() / l as f64
        })
        .collect()
}

/// Two-class rows `(0, scale * d)` with label frequencies equal to
/// `sigmoid(d)` to the nearest 1/`per_level`.
pub fn calibrated_binary(scale: f64, per_level: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut logits = Vec::new();
    let mut labels = Vec::new();
    for d in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0] {
        let p1 = 1.0 / (1.0 + f64::exp(-d));
        let pos = (p1 * per_level as f64).round() as usize;
        for i in 0..per_level {
            logits.push(vec![0.0, d * scale]);
            labels.push(usize::from(i < pos));
        }
    }
    (logits, labels)
}

/// Three-class rows `scale * z` over a grid of `z`, each repeated
/// `per_row` times with class counts proportional to `softmax(z)`.
pub fn calibrated_three_class(scale: f64, per_row: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut logits = Vec::new();
    let mut labels = Vec::new();
    let grid = [-1.5, -0.5, 0.0, 0.7, 1.6];
    for &a in &grid {
        for &b in &grid {
            let z = [0.0, a, b];
            let e: Vec<f64> = z.iter().map(|v: &f64| v.exp()).collect();
            let s: f64 = e.iter().sum();
            let c1 = (e[1] / s * per_row as f64).round() as usize;
            let c2 = (e[2] / s * per_row as f64).round() as usize;
            let c0 = per_row - c1 - c2;
            for (class, count) in [(0, c0), (1, c1), (2, c2)] {
                for _ in 0..count {
                    logits.push(z.iter().map(|v| v * scale).collect());
                    labels.push(class);
                }
            }
        }
    }
    (logits, labels)
}

use detcal::calibration::{Ablation, JointLossSettings, PositiveQuerySet, RegularizerBase, TrainConfig, UncertaintyGradient};
use detcal::tensor::VarianceKind;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// A random joint-loss instance: an `L x M x Q x C` stack with `L = 3`,
/// `Q <= 8`, `C <= 6`, positives in every image, and randomized settings
/// with both mechanisms on.
pub fn random_joint_instance(rng: &mut impl Rng) -> (Tensor, Vec<PositiveQuerySet>, JointLossSettings) {
    let (l, m) = (3, rng.random_range(1..=2));
    let q = rng.random_range(2..=8);
    let c = rng.random_range(2..=6);
    let scale = rng.random_range(0.5..2.5);
    let normal = Normal::new(0.0, scale).unwrap();
    let stack = Tensor::from_fn(&[l, m, q, c], |_| normal.sample(rng)).unwrap();
    let sets = (0..m)
        .map(|_| {
            let p = rng.random_range(1..=q.min(4));
            let idx = sample(rng, q, p).into_vec();
            let classes = (0..p).map(|_| rng.random_range(0..c)).collect();
            PositiveQuerySet::new(idx, classes).unwrap()
        })
        .collect();
    let mut settings = JointLossSettings::new(&TrainConfig::default(), Ablation::Full);
    settings.alpha = rng.random_range(0.3..=1.0);
    settings.lambda_reg = rng.random_range(0.0..2.0);
    settings.gamma = [0.0, 1.0, 2.0, rng.random_range(0.0..3.0)][rng.random_range(0..4)];
    if rng.random_bool(0.25) {
        settings.regularizer = RegularizerBase::SoftmaxCrossEntropy;
    }
    if rng.random_bool(0.25) {
        settings.variance = VarianceKind::Sample;
    }
    settings.uncertainty_gradient = UncertaintyGradient::Full;
    (stack, sets, settings)
}
