//! Label/prediction matching and the training loss terms.
//!
//! Curves are compared with the sampling distance (mean L1 over a shared
//! sample grid). The distance and the predicted class score combine into a
//! quality matrix, and the one-to-one assignment maximizing total quality is
//! found with the Hungarian method.

mod hungarian;

use crate::bezier::{BezierCurve, SampleGrid};
use crate::{Error, Result};

/// Default mixing exponent between class score and curve distance.
pub const DEFAULT_ALPHA: f64 = 0.8;
/// Default weight of negative samples in the classification loss.
pub const DEFAULT_NEG_WEIGHT: f64 = 0.4;
/// Probability clamp used by [`weighted_bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Mean per-sample L1 distance between two curves on `grid`.
pub fn sampling_distance(a: &BezierCurve, b: &BezierCurve, grid: &SampleGrid) -> Result<f64> {
    let pa = a.sample(grid)?;
    let pb = b.sample(grid)?;
    let sum: f64 = pa.iter().zip(&pb).map(|(&p, &q)| (p - q).l1()).sum();
    Ok(sum / pa.len() as f64)
}

/// `labels.len() x preds.len()` table of sampling distances.
pub fn distance_matrix(
    labels: &[BezierCurve],
    preds: &[BezierCurve],
    grid: &SampleGrid,
) -> Result<Vec<Vec<f64>>> {
    let label_samples = labels
        .iter()
        .map(|c| c.sample(grid))
        .collect::<Result<Vec<_>>>()?;
    let pred_samples = preds
        .iter()
        .map(|c| c.sample(grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(label_samples
        .iter()
        .map(|ls| {
            pred_samples
                .iter()
                .map(|ps| {
                    ls.iter().zip(ps).map(|(&p, &q)| (p - q).l1()).sum::<f64>() / ls.len() as f64
                })
                .collect()
        })
        .collect())
}

/// `p^(1-α) · (1 - d)^α`, with `d` clamped to `[0, 1]`.
pub fn match_quality(class_score: f64, distance: f64, alpha: f64) -> f64 {
    let d = distance.clamp(0.0, 1.0);
    class_score.powf(1.0 - alpha) * (1.0 - d).powf(alpha)
}

/// Label-by-prediction match qualities.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMatrix {
    values: Vec<Vec<f64>>,
    alpha: f64,
}

impl QualityMatrix {
    /// Wraps a precomputed table. Rows are labels, columns predictions.
    pub fn new(values: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha {alpha} outside [0, 1]")));
        }
        if let Some(first) = values.first() {
            if values.iter().any(|r| r.len() != first.len()) {
                return Err(Error::argument("ragged quality matrix"));
            }
        }
        if values.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("quality entries must lie in [0, 1]".into()));
        }
        Ok(Self { values, alpha })
    }

    /// Builds qualities from a distance table and per-prediction class scores.
    pub fn from_distances(distances: &[Vec<f64>], scores: &[f64], alpha: f64) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Domain(format!("class score {s} outside [0, 1]")));
        }
        if distances.iter().any(|row| row.len() != scores.len()) {
            return Err(Error::argument(
                "distance columns and scores differ in length",
            ));
        }
        let values = distances
            .iter()
            .map(|row| {
                row.iter()
                    .zip(scores)
                    .map(|(&d, &p)| match_quality(p, d, alpha))
                    .collect()
            })
            .collect();
        Self::new(values, alpha)
    }

    /// Number of labels.
    pub fn labels(&self) -> usize {
        self.values.len()
    }

    /// Number of predictions.
    pub fn predictions(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn get(&self, label: usize, pred: usize) -> f64 {
        self.values[label][pred]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub label: usize,
    pub prediction: usize,
    pub quality: f64,
    /// The label could not be placed on an eligible prediction and was
    /// matched without the prior.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchAssignment {
    pub pairs: Vec<MatchPair>,
    pub total_quality: f64,
}

impl MatchAssignment {
    fn from_columns(q: &QualityMatrix, cols: &[usize], eligible: Option<&[bool]>) -> Self {
        let pairs: Vec<MatchPair> = cols
            .iter()
            .enumerate()
            .map(|(label, &prediction)| MatchPair {
                label,
                prediction,
                quality: q.get(label, prediction),
                fallback: eligible.is_some_and(|e| !e[prediction]),
            })
            .collect();
        let total_quality = pairs.iter().map(|p| p.quality).sum();
        Self {
            pairs,
            total_quality,
        }
    }

    /// Prediction matched to each label, in label order.
    pub fn predictions(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.prediction).collect()
    }
}

/// One-to-one assignment of every label to a prediction maximizing total
/// quality. Ties go to the lowest prediction index, earliest label first.
pub fn hungarian_match(q: &QualityMatrix) -> Result<MatchAssignment> {
    if q.labels() > q.predictions() {
        return Err(Error::argument(format!(
            "cannot match {} labels to {} predictions",
            q.labels(),
            q.predictions()
        )));
    }
    let cols = hungarian::max_weight_assignment(q.rows());
    Ok(MatchAssignment::from_columns(q, &cols, None))
}

/// Maximum-weight one-to-one assignment for a table of arbitrary finite
/// weights, rows to columns; either side may be larger. Returns `(row, col)`
/// pairs for `min(rows, cols)` matches, ordered by row.
pub fn max_weight_pairs(weights: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows <= cols {
        hungarian::max_weight_assignment(weights)
            .into_iter()
            .enumerate()
            .collect()
    } else {
        let transposed: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..rows).map(|r| weights[r][c]).collect())
            .collect();
        let mut pairs: Vec<(usize, usize)> = hungarian::max_weight_assignment(&transposed)
            .into_iter()
            .enumerate()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Marks predictions whose logit is at least as large as each neighbour.
pub fn local_max_filter(logits: &[f64]) -> Vec<bool> {
    let n = logits.len();
    (0..n)
        .map(|i| {
            let left = i == 0 || logits[i] >= logits[i - 1];
            let right = i + 1 == n || logits[i] >= logits[i + 1];
            left && right
        })
        .collect()
}

/// Hungarian matching restricted to `eligible` predictions.
///
/// Ineligible columns are penalized so that the assignment uses as many
/// eligible predictions as possible and maximizes quality among those. When
/// fewer eligible predictions than labels exist, the leftover labels are
/// matched without the restriction and flagged with
/// [`MatchPair::fallback`]. The reported qualities are unpenalized.
pub fn hungarian_match_with_prior(q: &QualityMatrix, eligible: &[bool]) -> Result<MatchAssignment> {
    if eligible.len() != q.predictions() {
        return Err(Error::argument(
            "eligibility mask length differs from prediction count",
        ));
    }
    if q.labels() > q.predictions() {
        return Err(Error::argument(format!(
            "cannot match {} labels to {} predictions",
            q.labels(),
            q.predictions()
        )));
    }
    // any assignment using one more eligible column beats any using fewer
    let penalty = q.labels() as f64 + 1.0;
    let weights: Vec<Vec<f64>> = q
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(eligible)
                .map(|(&v, &ok)| if ok { v } else { v - penalty })
                .collect()
        })
        .collect();
    let cols = hungarian::max_weight_assignment(&weights);
    Ok(MatchAssignment::from_columns(q, &cols, Some(eligible)))
}

/// Weighted binary cross-entropy, `-(y·ln p + w·(1 - y)·ln(1 - p))`.
/// `prob` is clamped to `[1e-7, 1 - 1e-7]`.
pub fn weighted_bce(prob: f64, target: bool, neg_weight: f64) -> f64 {
    let p = prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if target {
        -p.ln()
    } else {
        -neg_weight * (1.0 - p).ln()
    }
}

/// Mean weighted BCE over all predictions, with matched predictions as positives.
pub fn classification_loss(scores: &[f64], matched: &[usize], neg_weight: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let sum: f64 = scores
        .iter()
        .enumerate()
        .map(|(i, &p)| weighted_bce(p, matched.contains(&i), neg_weight))
        .sum();
    sum / scores.len() as f64
}

/// Weights of the regression, classification and segmentation losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub regression: f64,
    pub classification: f64,
    pub segmentation: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            regression: 1.0,
            classification: 0.1,
            segmentation: 0.75,
        }
    }
}

impl LossWeights {
    pub fn new(regression: f64, classification: f64, segmentation: f64) -> Result<Self> {
        let w = Self {
            regression,
            classification,
            segmentation,
        };
        if [regression, classification, segmentation]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::argument(format!(
                "loss weights must be non-negative, got {w:?}"
            )));
        }
        Ok(w)
    }
}

pub fn total_loss(reg: f64, cls: f64, seg: f64, weights: &LossWeights) -> f64 {
    weights.regression * reg + weights.classification * cls + weights.segmentation * seg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bezier::Affine;
    use crate::Point;
    use approx::assert_abs_diff_eq;

    fn curve() -> BezierCurve {
        BezierCurve::cubic(
            Point::new(0.2, 0.9),
            Point::new(0.3, 0.7),
            Point::new(0.35, 0.5),
            Point::new(0.4, 0.4),
        )
        .unwrap()
    }

    #[test]
    fn sampling_distance_basics() {
        let grid = SampleGrid::cubic_default();
        let c = curve();
        assert_eq!(sampling_distance(&c, &c, &grid).unwrap(), 0.0);
        let moved = c.transformed(&Affine::translation(0.1, 0.2));
        assert_abs_diff_eq!(
            sampling_distance(&c, &moved, &grid).unwrap(),
            0.3,
            epsilon = 1e-12
        );
        let quad = BezierCurve::new(vec![Point::default(); 3]).unwrap();
        assert!(sampling_distance(&c, &quad, &grid).is_err());
    }

    #[test]
    fn quality_values() {
        assert_eq!(match_quality(1.0, 0.0, 0.8), 1.0);
        assert_eq!(match_quality(0.0, 0.0, 0.8), 0.0);
        assert_abs_diff_eq!(match_quality(0.9, 0.1, 0.8), 0.9, epsilon = 1e-12);
        // distances beyond 1 are clamped
        assert_eq!(match_quality(0.7, 3.0, 0.8), 0.0);
    }

    #[test]
    fn matches_two_by_two() {
        let q = QualityMatrix::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]], 0.8).unwrap();
        let m = hungarian_match(&q).unwrap();
        assert_eq!(m.predictions(), vec![0, 1]);
        assert_abs_diff_eq!(m.total_quality, 1.7, epsilon = 1e-12);
    }

    #[test]
    fn single_label_takes_row_argmax() {
        let q = QualityMatrix::new(vec![vec![0.1, 0.7, 0.3, 0.7]], 0.8).unwrap();
        assert_eq!(hungarian_match(&q).unwrap().predictions(), vec![1]);
    }

    #[test]
    fn more_labels_than_predictions_is_an_error() {
        let q = QualityMatrix::new(vec![vec![0.5], vec![0.5]], 0.8).unwrap();
        assert!(matches!(hungarian_match(&q), Err(Error::Argument(_))));
    }

    #[test]
    fn quality_matrix_validation() {
        assert!(QualityMatrix::new(vec![vec![1.5]], 0.8).is_err());
        assert!(QualityMatrix::new(vec![vec![0.5]], 1.2).is_err());
        assert!(QualityMatrix::from_distances(&[vec![0.1]], &[1.2], 0.8).is_err());
    }

    #[test]
    fn local_maxima() {
        assert_eq!(
            local_max_filter(&[1.0, 2.0, 3.0, 4.0]),
            vec![false, false, false, true]
        );
        assert_eq!(
            local_max_filter(&[1.0, 3.0, 1.0, 3.0, 1.0]),
            vec![false, true, false, true, false]
        );
        assert_eq!(local_max_filter(&[0.3]), vec![true]);
        assert_eq!(local_max_filter(&[2.0, 2.0]), vec![true, true]);
    }

    #[test]
    fn prior_restricts_columns_and_falls_back() {
        let q = QualityMatrix::new(vec![vec![0.9, 0.5, 0.4], vec![0.8, 0.7, 0.1]], 0.8).unwrap();
        let only_last_two = [false, true, true];
        let m = hungarian_match_with_prior(&q, &only_last_two).unwrap();
        assert_eq!(m.predictions(), vec![2, 1]);
        assert!(m.pairs.iter().all(|p| !p.fallback));

        let one_eligible = [false, true, false];
        let m = hungarian_match_with_prior(&q, &one_eligible).unwrap();
        // label 1 keeps the eligible column (0.7 + 0.9 beats 0.5 + 0.8), label 0 falls back
        assert_eq!(m.predictions(), vec![0, 1]);
        assert!(m.pairs[0].fallback);
        assert!(!m.pairs[1].fallback);
        assert_abs_diff_eq!(m.total_quality, 1.6, epsilon = 1e-12);
    }

    #[test]
    fn bce_values() {
        assert!(weighted_bce(1.0, true, 0.4) < 1e-6);
        assert_abs_diff_eq!(
            weighted_bce(0.5, true, 0.4),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            weighted_bce(0.5, false, 0.4),
            0.4 * std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert!(weighted_bce(0.0, true, 0.4).is_finite());
    }

    #[test]
    fn total_loss_values() {
        let w = LossWeights::default();
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w), 0.0);
        assert_abs_diff_eq!(total_loss(1.0, 1.0, 1.0, &w), 1.85, epsilon = 1e-12);
        assert_abs_diff_eq!(total_loss(0.5, 2.0, 0.4, &w), 1.0, epsilon = 1e-12);
        assert!(LossWeights::new(1.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn max_weight_pairs_handles_tall_tables() {
        let w = vec![vec![0.1], vec![0.9], vec![0.3]];
        assert_eq!(max_weight_pairs(&w), vec![(1, 0)]);
        assert!(max_weight_pairs(&[]).is_empty());
    }
}
