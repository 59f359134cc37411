//! COCO results and annotation JSON.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection, GroundTruth, ImageId};

/// One entry of a COCO results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: ImageId,
    pub category_id: i64,
    pub bbox: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<i64>,
    pub image_id: ImageId,
    pub category_id: i64,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// The parts of a COCO annotation file this crate reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotationFile {
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse {
            path: if path == "." { source.to_string() } else { format!("{source}: {path}") },
            message: e.into_inner().to_string(),
        }
    })
}

fn to_box(b: [f64; 4], at: impl Fn() -> String) -> Result<BBox> {
    BBox::new(b[0], b[1], b[2], b[3]).map_err(|e| Error::Parse {
        path: at(),
        message: e.to_string(),
    })
}

pub fn parse_results(text: &str, source: &str) -> Result<Vec<CocoResult>> {
    let results: Vec<CocoResult> = parse_json(text, source)?;
    for (i, r) in results.iter().enumerate() {
        to_box(r.bbox, || format!("{source}: [{i}].bbox"))?;
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::Parse {
                path: format!("{source}: [{i}].score"),
                message: format!("score {} outside [0, 1]", r.score),
            });
        }
    }
    Ok(results)
}

pub fn parse_annotations(text: &str, source: &str) -> Result<CocoAnnotationFile> {
    let file: CocoAnnotationFile = parse_json(text, source)?;
    let cats = file.category_ids();
    for (i, a) in file.annotations.iter().enumerate() {
        to_box(a.bbox, || format!("{source}: annotations[{i}].bbox"))?;
        if !cats.contains(&a.category_id) {
            return Err(Error::Parse {
                path: format!("{source}: annotations[{i}].category_id"),
                message: format!("category {} not in categories", a.category_id),
            });
        }
    }
    Ok(file)
}

impl CocoAnnotationFile {
    pub fn category_ids(&self) -> BTreeSet<i64> {
        self.categories.iter().map(|c| c.id).collect()
    }

    pub fn ground_truths(&self) -> Vec<GroundTruth> {
        self.annotations
            .iter()
            .map(|a| GroundTruth {
                image_id: a.image_id.clone(),
                category: a.category_id,
                bbox: BBox { x: a.bbox[0], y: a.bbox[1], w: a.bbox[2], h: a.bbox[3] },
            })
            .collect()
    }
}

/// Converts results to detections, checking every category against the
/// annotation file's category set.
pub fn detections(results: &[CocoResult], categories: &BTreeSet<i64>, source: &str) -> Result<Vec<Detection>> {
    results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if !categories.contains(&r.category_id) {
                return Err(Error::Parse {
                    path: format!("{source}: [{i}].category_id"),
                    message: format!("category {} not in the annotation categories", r.category_id),
                });
            }
            Ok(Detection {
                image_id: r.image_id.clone(),
                category: r.category_id,
                bbox: BBox { x: r.bbox[0], y: r.bbox[1], w: r.bbox[2], h: r.bbox[3] },
                score: r.score,
            })
        })
        .collect()
}

/// Reads a results/annotation pair into detections and ground truths.
pub fn load_pair(preds: &Path, gts: &Path) -> Result<(Vec<Detection>, Vec<GroundTruth>)> {
    let preds_name = preds.display().to_string();
    let gts_name = gts.display().to_string();
    let ann = parse_annotations(&std::fs::read_to_string(gts)?, &gts_name)?;
    let results = parse_results(&std::fs::read_to_string(preds)?, &preds_name)?;
    let dets = detections(&results, &ann.category_ids(), &preds_name)?;
    Ok((dets, ann.ground_truths()))
}
