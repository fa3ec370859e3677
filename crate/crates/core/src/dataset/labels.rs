//! Native label files: one JSON object per line.
//!
//! ```text
//! {"image_key":"a.jpg","image_size":[590,1640],"curves":[[x0,y0,x1,y1,x2,y2,x3,y3]],"fit_residual":[1.2e-7]}
//! ```
//!
//! Control points are normalized and rounded to six decimals. Prediction
//! files use the same layout with `scores` (and optionally `logits`) in
//! place of `fit_residual`.

use serde::{Deserialize, Serialize};

use super::BezierLabel;
use crate::bezier::BezierCurve;
use crate::{Error, ImageSize, Result};

pub const LABEL_DECIMALS: i32 = 6;

fn round_coord(v: f64) -> f64 {
    let scale = 10f64.powi(LABEL_DECIMALS);
    let r = (v * scale).round() / scale;
    // avoid writing "-0.0"
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn curves_to_rows(curves: &[BezierCurve]) -> Vec<Vec<f64>> {
    curves
        .iter()
        .map(|c| c.to_flat().into_iter().map(round_coord).collect())
        .collect()
}

fn rows_to_curves(key: &str, rows: &[Vec<f64>]) -> Result<Vec<BezierCurve>> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != 8 {
                return Err(Error::Schema(format!(
                    "{key}: curve {i} has {} numbers, expected 8",
                    row.len()
                )));
            }
            BezierCurve::from_flat(row).map_err(|e| Error::Schema(format!("{key}: curve {i}: {e}")))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    image_key: String,
    image_size: ImageSize,
    curves: Vec<Vec<f64>>,
    fit_residual: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    image_key: String,
    image_size: ImageSize,
    curves: Vec<Vec<f64>>,
    scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logits: Option<Vec<Vec<f64>>>,
}

/// Predicted curves for one image with their class probabilities. `logits`
/// holds the raw classification rows used by the local-maximum prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub image_key: String,
    pub image_size: ImageSize,
    pub curves: Vec<BezierCurve>,
    pub scores: Vec<f64>,
    pub logits: Option<Vec<Vec<f64>>>,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        let key = &self.image_key;
        if key.is_empty() {
            return Err(Error::Validation("empty image key".into()));
        }
        if self.scores.len() != self.curves.len() {
            return Err(Error::Validation(format!(
                "{key}: {} scores for {} curves",
                self.scores.len(),
                self.curves.len()
            )));
        }
        if let Some((i, s)) = self
            .scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            return Err(Error::Validation(format!(
                "{key}: score {i} = {s} outside [0, 1]"
            )));
        }
        if let Some(rows) = &self.logits {
            let total: usize = rows.iter().map(Vec::len).sum();
            if total != self.curves.len() {
                return Err(Error::Validation(format!(
                    "{key}: logit rows cover {total} proposals for {} curves",
                    self.curves.len()
                )));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{key}: non-finite logit")));
            }
        }
        Ok(())
    }
}

fn validate_label(label: &BezierLabel) -> Result<()> {
    if label.image_key.is_empty() {
        return Err(Error::Validation("empty image key".into()));
    }
    if label.fit_residual.len() != label.curves.len() {
        return Err(Error::Validation(format!(
            "{}: {} residuals for {} curves",
            label.image_key,
            label.fit_residual.len(),
            label.curves.len()
        )));
    }
    if label
        .fit_residual
        .iter()
        .any(|r| !(r.is_finite() && *r >= 0.0))
    {
        return Err(Error::Validation(format!(
            "{}: invalid residual",
            label.image_key
        )));
    }
    if let Some(c) = label.curves.iter().find(|c| c.order() != 3) {
        return Err(Error::Validation(format!(
            "{}: curve of order {} in a cubic label",
            label.image_key,
            c.order()
        )));
    }
    Ok(())
}

/// Serializes one label as a single line, without the trailing newline.
pub fn format_label(label: &BezierLabel) -> String {
    let line = LabelLine {
        image_key: label.image_key.clone(),
        image_size: label.image_size,
        curves: curves_to_rows(&label.curves),
        fit_residual: label.fit_residual.clone(),
    };
    serde_json::to_string(&line).expect("label serialization cannot fail")
}

pub fn parse_label(line: &str) -> Result<BezierLabel> {
    let raw: LabelLine = serde_json::from_str(line).map_err(|e| Error::ParseAt {
        offset: e.column().saturating_sub(1),
        message: e.to_string(),
    })?;
    let label = BezierLabel {
        curves: rows_to_curves(&raw.image_key, &raw.curves)?,
        image_key: raw.image_key,
        image_size: raw.image_size,
        fit_residual: raw.fit_residual,
    };
    validate_label(&label)?;
    Ok(label)
}

pub fn format_prediction(pred: &PredictionRecord) -> String {
    let line = PredictionLine {
        image_key: pred.image_key.clone(),
        image_size: pred.image_size,
        curves: curves_to_rows(&pred.curves),
        scores: pred.scores.clone(),
        logits: pred.logits.clone(),
    };
    serde_json::to_string(&line).expect("prediction serialization cannot fail")
}

pub fn parse_prediction(line: &str) -> Result<PredictionRecord> {
    let raw: PredictionLine = serde_json::from_str(line).map_err(|e| Error::ParseAt {
        offset: e.column().saturating_sub(1),
        message: e.to_string(),
    })?;
    let pred = PredictionRecord {
        curves: rows_to_curves(&raw.image_key, &raw.curves)?,
        image_key: raw.image_key,
        image_size: raw.image_size,
        scores: raw.scores,
        logits: raw.logits,
    };
    pred.validate()?;
    Ok(pred)
}

fn read_lines<T>(text: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse(l).map_err(|e| match e {
                Error::ParseAt { message, .. } => Error::Parse {
                    line: i + 1,
                    message,
                },
                Error::Schema(m) => Error::Schema(format!("line {}: {m}", i + 1)),
                Error::Validation(m) => Error::Validation(format!("line {}: {m}", i + 1)),
                other => other,
            })
        })
        .collect()
}

/// Reads a whole label file. Blank lines are ignored.
pub fn read_labels(text: &str) -> Result<Vec<BezierLabel>> {
    read_lines(text, parse_label)
}

pub fn read_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    read_lines(text, parse_prediction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Point;

    fn label() -> BezierLabel {
        BezierLabel {
            image_key: "driver_23/000.jpg".into(),
            image_size: ImageSize::new(590, 1640),
            curves: vec![BezierCurve::cubic(
                Point::new(0.1234567, 0.9),
                Point::new(0.2, -0.0000001),
                Point::new(1.0 / 3.0, 0.5),
                Point::new(0.4, 0.35),
            )
            .unwrap()],
            fit_residual: vec![2.5e-7],
        }
    }

    #[test]
    fn rounds_to_six_decimals() {
        let line = format_label(&label());
        assert_eq!(
            line,
            r#"{"image_key":"driver_23/000.jpg","image_size":[590,1640],"curves":[[0.123457,0.9,0.2,0.0,0.333333,0.5,0.4,0.35]],"fit_residual":[2.5e-7]}"#
        );
    }

    #[test]
    fn round_trip_is_stable() {
        let line = format_label(&label());
        let back = parse_label(&line).unwrap();
        assert_eq!(format_label(&back), line);
        for (a, b) in back.curves[0]
            .to_flat()
            .iter()
            .zip(label().curves[0].to_flat())
        {
            assert!((a - b).abs() <= 0.5e-6 + 1e-15);
        }
    }

    #[test]
    fn wrong_curve_length_is_schema_error() {
        let err = parse_label(
            r#"{"image_key":"a","image_size":[1,1],"curves":[[0,0,1,1]],"fit_residual":[0]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn read_reports_line_numbers() {
        let text = format!("{}\n\n{{oops\n", format_label(&label()));
        match read_labels(&text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn prediction_scores_validated() {
        let mut pred = PredictionRecord {
            image_key: "a".into(),
            image_size: ImageSize::new(10, 10),
            curves: label().curves,
            scores: vec![1.5],
            logits: None,
        };
        let err = parse_prediction(&format_prediction(&pred)).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("score 0")),
            "{err}"
        );
        pred.scores = vec![0.7];
        pred.logits = Some(vec![vec![0.1]]);
        let back = parse_prediction(&format_prediction(&pred)).unwrap();
        assert_eq!(back.scores, vec![0.7]);
        assert_eq!(back.logits, Some(vec![vec![0.1]]));
    }
}
