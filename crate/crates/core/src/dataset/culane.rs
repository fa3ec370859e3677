//! `<image>.lines.txt` annotations: one lane per line, whitespace-separated
//! alternating x y pixel coordinates.

use std::fmt::Write as _;

use super::check_guard_band;
use crate::bezier::Polyline;
use crate::{Error, ImageSize, Point, Result};

/// Image size of the CULane benchmark.
pub const CULANE_IMAGE_SIZE: ImageSize = ImageSize::new(590, 1640);

/// Parses a lines file into normalized polylines. Lanes with fewer than two
/// points are dropped with a warning.
pub fn parse_culane(text: &str, image_size: ImageSize) -> Result<Vec<Polyline>> {
    let mut lanes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if !tokens.len().is_multiple_of(2) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("odd number of coordinates ({})", tokens.len()),
            });
        }
        let values = tokens
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("invalid number {t:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let pixels: Vec<Point> = values
            .chunks_exact(2)
            .map(|c| Point::new(c[0], c[1]))
            .collect();
        if pixels.len() < 2 {
            log::warn!("line {line_no}: lane with {} point dropped", pixels.len());
            continue;
        }
        let lane = Polyline::from_pixels(&pixels, image_size)?;
        check_guard_band(&lane).map_err(|msg| Error::Parse {
            line: line_no,
            message: msg,
        })?;
        lanes.push(lane);
    }
    Ok(lanes)
}

/// Writes lanes back in pixel coordinates with three decimals.
pub fn write_culane(lanes: &[Polyline]) -> String {
    let mut out = String::new();
    for lane in lanes {
        let mut first = true;
        for p in lane.to_pixels() {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{:.3} {:.3}", p.x, p.y);
        }
        out.push('\n');
    }
    out
}
