//! TuSimple-style annotations: newline-delimited JSON objects with lane
//! x positions on a shared row grid (`h_samples`); −2 marks a missing point.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use super::{check_guard_band, AnnotationRecord};
use crate::bezier::Polyline;
use crate::metrics::TusimpleLanes;
use crate::{Error, ImageSize, Point, Result};

/// Image size of the TuSimple benchmark.
pub const TUSIMPLE_IMAGE_SIZE: ImageSize = ImageSize::new(720, 1280);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TusimpleRecord {
    pub lanes: Vec<Vec<f64>>,
    pub h_samples: Vec<f64>,
    pub raw_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_time: Option<f64>,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    before + column.saturating_sub(1)
}

impl TusimpleRecord {
    /// Parses and schema-checks one JSON record.
    pub fn parse(json_line: &str) -> Result<Self> {
        let record: TusimpleRecord =
            serde_json::from_str(json_line).map_err(|e| Error::ParseAt {
                offset: byte_offset(json_line, e.line(), e.column()),
                message: e.to_string(),
            })?;
        if let Some((i, lane)) = record
            .lanes
            .iter()
            .enumerate()
            .find(|(_, l)| l.len() != record.h_samples.len())
        {
            return Err(Error::Schema(format!(
                "lane {i} has {} entries but h_samples has {}",
                lane.len(),
                record.h_samples.len()
            )));
        }
        if record.raw_file.is_empty() {
            return Err(Error::Schema("empty raw_file".into()));
        }
        Ok(record)
    }

    pub fn as_lanes(&self) -> TusimpleLanes {
        TusimpleLanes {
            h_samples: self.h_samples.clone(),
            lanes: self.lanes.clone(),
        }
    }

    /// Converts to polylines, skipping absent points. Lanes with fewer than
    /// two points are dropped.
    pub fn to_annotation(&self, image_size: ImageSize) -> Result<AnnotationRecord> {
        let mut lanes = Vec::new();
        for (i, xs) in self.lanes.iter().enumerate() {
            let pixels: Vec<Point> = xs
                .iter()
                .zip(&self.h_samples)
                .filter(|(x, _)| **x >= 0.0)
                .map(|(&x, &y)| Point::new(x, y))
                .collect();
            if pixels.len() < 2 {
                if !pixels.is_empty() {
                    log::warn!("{}: lane {i} with a single point dropped", self.raw_file);
                }
                continue;
            }
            let lane = Polyline::from_pixels(&pixels, image_size)?;
            check_guard_band(&lane)
                .map_err(|m| Error::Validation(format!("{}: lane {i}: {m}", self.raw_file)))?;
            lanes.push(lane);
        }
        AnnotationRecord::new(self.raw_file.clone(), image_size, lanes)
    }

    /// Serializes on one line. Whole numbers are written without a fraction.
    pub fn to_json_line(&self) -> String {
        let num = |v: f64| -> Value {
            if v.fract() == 0.0 && v.abs() < 9.0e15 {
                Value::Number(Number::from(v as i64))
            } else {
                Number::from_f64(v).map_or(Value::Null, Value::Number)
            }
        };
        let mut map = Map::new();
        map.insert(
            "lanes".into(),
            Value::Array(
                self.lanes
                    .iter()
                    .map(|l| Value::Array(l.iter().map(|&v| num(v)).collect()))
                    .collect(),
            ),
        );
        map.insert(
            "h_samples".into(),
            Value::Array(self.h_samples.iter().map(|&v| num(v)).collect()),
        );
        map.insert("raw_file".into(), Value::String(self.raw_file.clone()));
        if let Some(rt) = self.run_time {
            map.insert("run_time".into(), num(rt));
        }
        Value::Object(map).to_string()
    }
}

/// Parses one record straight into an annotation.
pub fn parse_tusimple(json_line: &str, image_size: ImageSize) -> Result<AnnotationRecord> {
    TusimpleRecord::parse(json_line)?.to_annotation(image_size)
}
