//! Box geometry, IoU, and greedy detection-to-ground-truth matching.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// IoU threshold used when none is given.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Image identifier. COCO files use integers, but strings are accepted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageId {
    Int(i64),
    Str(String),
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageId::Int(i) => write!(f, "{i}"),
            ImageId::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for ImageId {
    fn from(v: i64) -> Self {
        ImageId::Int(v)
    }
}

/// Axis-aligned box in `(x, y, w, h)` form, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("box coordinates must be finite".into()));
        }
        if self.w < 0.0 || self.h < 0.0 {
            return Err(Error::InvalidArgument("box width and height must be >= 0".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Corner form `(x0, y0, x1, y1)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (self.x, self.y, self.x + self.w, self.y + self.h)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

/// Intersection over union. Returns 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// A predicted box with its class and confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: ImageId,
    pub category: i64,
    pub bbox: BBox,
    pub score: f64,
}

/// An annotated object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: ImageId,
    pub category: i64,
    pub bbox: BBox,
}

/// A detection together with its correctness indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedDetection {
    pub detection: Detection,
    /// 1 for a true positive, 0 otherwise.
    pub f: u8,
    /// Index into the ground-truth list passed to [`match_detections`].
    pub matched_gt: Option<usize>,
    /// Best IoU against the still-unmatched same-class ground truths at
    /// the time this detection was processed.
    pub iou: f64,
}

impl MatchedDetection {
    pub fn is_correct(&self) -> bool {
        self.f == 1
    }
}

fn validate_threshold(k: f64) -> Result<()> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidThreshold(k));
    }
    Ok(())
}

/// Greedy matching, one image at a time.
///
/// Detections are visited by descending score (ties by input index). Each
/// one takes the unmatched ground truth of the same image and class with
/// the highest IoU (ties by lowest index), provided that IoU reaches `k`.
/// Ground truths are consumed at most once; duplicates become false
/// positives. The output is in input order.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    k: f64,
) -> Result<Vec<MatchedDetection>> {
    validate_threshold(k)?;

    let mut by_image: BTreeMap<&ImageId, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        by_image.entry(&d.image_id).or_default().0.push(i);
    }
    for (j, g) in gts.iter().enumerate() {
        if let Some(entry) = by_image.get_mut(&g.image_id) {
            entry.1.push(j);
        }
    }

    let per_image: Vec<Vec<(usize, MatchedDetection)>> = by_image
        .into_par_iter()
        .map(|(_, (det_idx, gt_idx))| match_one_image(dets, gts, &det_idx, &gt_idx, k))
        .collect();

    let mut out: Vec<Option<MatchedDetection>> = vec![None; dets.len()];
    for (i, m) in per_image.into_iter().flatten() {
        out[i] = Some(m);
    }
    Ok(out.into_iter().map(|m| m.expect("every detection visited")).collect())
}

fn match_one_image(
    dets: &[Detection],
    gts: &[GroundTruth],
    det_idx: &[usize],
    gt_idx: &[usize],
    k: f64,
) -> Vec<(usize, MatchedDetection)> {
    let mut order = det_idx.to_vec();
    // stable sort keeps input order among equal scores
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let mut taken = vec![false; gt_idx.len()];
    let mut result = Vec::with_capacity(order.len());
    for i in order {
        let det = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (slot, &j) in gt_idx.iter().enumerate() {
            if taken[slot] || gts[j].category != det.category {
                continue;
            }
            let v = iou(&det.bbox, &gts[j].bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((slot, v));
            }
        }
        let (matched_gt, f, best_iou) = match best {
            Some((slot, v)) if v >= k => {
                taken[slot] = true;
                (Some(gt_idx[slot]), 1, v)
            }
            Some((_, v)) => (None, 0, v),
            None => (None, 0, 0.0),
        };
        result.push((
            i,
            MatchedDetection {
                detection: det.clone(),
                f,
                matched_gt,
                iou: best_iou,
            },
        ));
    }
    result
}
