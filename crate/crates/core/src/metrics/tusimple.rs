//! Point-accuracy evaluation on a fixed set of image rows.

use serde::{Deserialize, Serialize};

use crate::matching::max_weight_pairs;
use crate::{Error, Point, Result};

/// Sentinel for "no lane point on this row". Any negative x is treated as absent.
pub const ABSENT_X: f64 = -2.0;

/// Lanes sampled as x positions at shared rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TusimpleLanes {
    pub h_samples: Vec<f64>,
    pub lanes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TusimpleConfig {
    /// A point is correct when `|x_pred - x_gt|` is strictly below this.
    pub point_threshold: f64,
    /// Minimum fraction of correct points for a lane to count as matched.
    pub match_fraction: f64,
}

impl Default for TusimpleConfig {
    fn default() -> Self {
        Self {
            point_threshold: 20.0,
            match_fraction: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TusimpleReport {
    pub accuracy: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub correct_points: u64,
    pub gt_points: u64,
    pub matched_lanes: u64,
    pub pred_lanes: u64,
    pub gt_lanes: u64,
}

fn present(x: f64) -> bool {
    x >= 0.0
}

/// x position of the polyline at each row, [`ABSENT_X`] where the polyline
/// does not reach the row. Uses the first segment spanning the row.
pub fn lane_x_at_rows(points: &[Point], rows: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|&y| {
            points
                .windows(2)
                .find_map(|w| {
                    let (a, b) = (w[0], w[1]);
                    let (lo, hi) = (a.y.min(b.y), a.y.max(b.y));
                    if y < lo || y > hi {
                        return None;
                    }
                    if a.y == b.y {
                        return Some(a.x);
                    }
                    Some(a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y))
                })
                .filter(|x| present(*x))
                .unwrap_or(ABSENT_X)
        })
        .collect()
}

/// TuSimple-style accuracy, false-positive rate and false-negative rate.
///
/// Per image, predictions are paired one-to-one with ground-truth lanes to
/// maximize correct points. Accuracy is correct points over ground-truth
/// points; a pair is matched when its correct fraction reaches
/// `match_fraction`. Ground-truth lanes without any points are ignored.
pub fn tusimple_metrics(
    images: &[(TusimpleLanes, TusimpleLanes)],
    config: &TusimpleConfig,
) -> Result<TusimpleReport> {
    let mut correct_points = 0u64;
    let mut gt_points = 0u64;
    let mut matched_lanes = 0u64;
    let mut pred_lanes = 0u64;
    let mut gt_lanes = 0u64;

    for (idx, (pred, gt)) in images.iter().enumerate() {
        if pred.h_samples != gt.h_samples {
            return Err(Error::argument(format!(
                "image {idx}: prediction rows differ from ground-truth rows"
            )));
        }
        let rows = gt.h_samples.len();
        if pred.lanes.iter().chain(&gt.lanes).any(|l| l.len() != rows) {
            return Err(Error::argument(format!(
                "image {idx}: lane length differs from the row count {rows}"
            )));
        }
        let gts: Vec<&Vec<f64>> = gt
            .lanes
            .iter()
            .filter(|l| l.iter().any(|&x| present(x)))
            .collect();
        let counts: Vec<u64> = gts
            .iter()
            .map(|l| l.iter().filter(|&&x| present(x)).count() as u64)
            .collect();
        let correct: Vec<Vec<f64>> = gts
            .iter()
            .map(|g| {
                pred.lanes
                    .iter()
                    .map(|p| {
                        g.iter()
                            .zip(p)
                            .filter(|(&gx, &px)| {
                                present(gx)
                                    && present(px)
                                    && (px - gx).abs() < config.point_threshold
                            })
                            .count() as f64
                    })
                    .collect()
            })
            .collect();
        for (g, p) in max_weight_pairs(&correct) {
            let c = correct[g][p] as u64;
            correct_points += c;
            if c as f64 >= config.match_fraction * counts[g] as f64 && c > 0 {
                matched_lanes += 1;
            }
        }
        gt_points += counts.iter().sum::<u64>();
        gt_lanes += gts.len() as u64;
        pred_lanes += pred.lanes.len() as u64;
    }

    let rate = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(TusimpleReport {
        accuracy: rate(correct_points, gt_points),
        fp_rate: rate(pred_lanes - matched_lanes, pred_lanes),
        fn_rate: rate(gt_lanes - matched_lanes, gt_lanes),
        correct_points,
        gt_points,
        matched_lanes,
        pred_lanes,
        gt_lanes,
    })
}
