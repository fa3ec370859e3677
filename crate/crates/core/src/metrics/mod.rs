//! Lane benchmark metrics.
//!
//! CULane-style evaluation draws every lane as a 30 px wide stroke, matches
//! predictions to ground truth one-to-one by maximum total pixel IoU, and
//! counts a pair as a true positive when its IoU reaches the threshold.
//! TuSimple-style evaluation compares x positions on a shared set of rows.

mod raster;
mod tusimple;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bezier::{BezierCurve, SampleGrid};
use crate::matching::max_weight_pairs;
use crate::{ImageSize, Point, Result};

pub use raster::{lane_iou, rasterize_lane, rasterize_lanes, LaneMask};
pub use tusimple::{
    lane_x_at_rows, tusimple_metrics, TusimpleConfig, TusimpleLanes, TusimpleReport, ABSENT_X,
};

pub const DEFAULT_LANE_WIDTH: f64 = 30.0;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Lanes of one image in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneSet {
    pub lanes: Vec<Vec<Point>>,
    pub image_size: ImageSize,
}

impl LaneSet {
    pub fn new(lanes: Vec<Vec<Point>>, image_size: ImageSize) -> Self {
        Self { lanes, image_size }
    }

    /// Samples normalized curves on `grid` and scales them to pixels.
    pub fn from_curves(
        curves: &[BezierCurve],
        image_size: ImageSize,
        grid: &SampleGrid,
    ) -> Result<Self> {
        let lanes = curves
            .iter()
            .map(|c| {
                c.sample(grid)
                    .map(|pts| pts.into_iter().map(|p| image_size.to_pixels(p)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lanes, image_size })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CulaneConfig {
    pub iou_threshold: f64,
    pub lane_width: f64,
}

impl Default for CulaneConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            lane_width: DEFAULT_LANE_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCounts {
    pub image_key: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Prediction keys with no ground-truth entry; not scored.
    pub unmatched_pred_keys: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_image: Option<Vec<ImageCounts>>,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: f1_score(precision, recall),
            unmatched_pred_keys: 0,
            per_image: None,
        }
    }
}

/// Pairwise IoU, `preds.len() x gts.len()`.
pub fn iou_matrix(preds: &LaneSet, gts: &LaneSet, lane_width: f64) -> Vec<Vec<f64>> {
    let size = gts.image_size;
    let gt_masks: Vec<LaneMask> = gts
        .lanes
        .iter()
        .map(|l| rasterize_lane(l, lane_width, size))
        .collect();
    preds
        .lanes
        .iter()
        .map(|l| {
            let m = rasterize_lane(l, lane_width, size);
            gt_masks.iter().map(|g| m.iou(g)).collect()
        })
        .collect()
}

/// True positives, false positives and false negatives for one image.
pub fn image_counts(preds: &LaneSet, gts: &LaneSet, config: &CulaneConfig) -> (u64, u64, u64) {
    let ious = iou_matrix(preds, gts, config.lane_width);
    let tp = max_weight_pairs(&ious)
        .into_iter()
        .filter(|&(p, g)| ious[p][g] >= config.iou_threshold)
        .count() as u64;
    let np = preds.lanes.len() as u64;
    let ng = gts.lanes.len() as u64;
    (tp, np - tp, ng - tp)
}

/// CULane-style F1 over a keyed collection of images.
///
/// Every ground-truth key is scored; a missing prediction entry counts as an
/// image with no predicted lanes.
pub fn culane_f1(
    preds: &BTreeMap<String, LaneSet>,
    gts: &BTreeMap<String, LaneSet>,
    config: &CulaneConfig,
) -> EvalReport {
    let keys: Vec<&String> = gts.keys().collect();
    let per_image: Vec<ImageCounts> = keys
        .par_iter()
        .map(|&key| {
            let gt = &gts[key];
            let (tp, fp, fn_) = match preds.get(key) {
                Some(pred) => image_counts(pred, gt, config),
                None => (0, 0, gt.lanes.len() as u64),
            };
            ImageCounts {
                image_key: key.clone(),
                tp,
                fp,
                fn_,
            }
        })
        .collect();

    let (tp, fp, fn_) = per_image
        .iter()
        .fold((0, 0, 0), |(a, b, c), i| (a + i.tp, b + i.fp, c + i.fn_));
    if tp + fp + fn_ == 0 {
        log::warn!("evaluation contains no lanes at all; reporting f1 = 0");
    }
    let mut report = EvalReport::from_counts(tp, fp, fn_);
    report.unmatched_pred_keys = preds.keys().filter(|k| !gts.contains_key(*k)).count() as u64;
    report.per_image = Some(per_image);
    report
}
