//! Random cubic lane scenes with row-sampled annotations, for testing the
//! fitting and evaluation pipeline end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bezier::{BezierCurve, Polyline};
use crate::dataset::{AnnotationRecord, CULANE_IMAGE_SIZE};
use crate::{ImageSize, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub images: usize,
    pub min_lanes: usize,
    pub max_lanes: usize,
    /// Uniform noise amplitude added to both coordinates, normalized units.
    pub noise: f64,
    /// Vertical spacing of annotation points, pixels.
    pub row_step: f64,
    pub image_size: ImageSize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            images: 1000,
            min_lanes: 2,
            max_lanes: 4,
            noise: 0.001,
            row_step: 10.0,
            image_size: CULANE_IMAGE_SIZE,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    /// Annotation polylines, noise included.
    pub record: AnnotationRecord,
    /// Generating curves, one per lane.
    pub curves: Vec<BezierCurve>,
}

/// Control points stay inside `[0.02, 0.98]²`, so the whole curve does too,
/// and their y values decrease strictly so the lane is monotone in y.
fn random_lane(rng: &mut impl Rng) -> Result<BezierCurve> {
    let y0 = rng.random_range(0.90..0.98);
    let y3 = rng.random_range(0.35..0.45);
    let y1 = y0 + (y3 - y0) * rng.random_range(0.25..0.42);
    let y2 = y0 + (y3 - y0) * rng.random_range(0.58..0.75);
    let x0: f64 = rng.random_range(0.05..0.95);
    let x3 = 0.5 + rng.random_range(-0.1..0.1);
    let bend = rng.random_range(-0.08..0.08);
    let clamp = |x: f64| x.clamp(0.02, 0.98);
    let x1 = clamp(x0 + (x3 - x0) / 3.0 + bend);
    let x2 = clamp(x0 + 2.0 * (x3 - x0) / 3.0 + bend);
    BezierCurve::cubic(
        Point::new(x0, y0),
        Point::new(x1, y1),
        Point::new(x2, y2),
        Point::new(x3, y3),
    )
}

/// Parameter where the (y-decreasing) curve crosses height `y`.
fn param_at_y(curve: &BezierCurve, y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if curve.evaluate(mid).y > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Points of `curve` on every `row_step`-th pixel row it spans, ordered from
/// the bottom of the image upwards. Normalized coordinates.
pub fn sample_rows(curve: &BezierCurve, image_size: ImageSize, row_step: f64) -> Vec<Point> {
    let h = image_size.height as f64;
    let bottom = curve.evaluate(0.0).y * h;
    let top = curve.evaluate(1.0).y * h;
    let mut row = (bottom / row_step).floor() * row_step;
    let mut points = Vec::new();
    while row >= top {
        points.push(curve.evaluate(param_at_y(curve, row / h)));
        row -= row_step;
    }
    points
}

pub fn generate_image(config: &SyntheticConfig, index: usize) -> Result<SyntheticImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let count = rng.random_range(config.min_lanes..=config.max_lanes);
    let mut curves = Vec::with_capacity(count);
    let mut lanes = Vec::with_capacity(count);
    for _ in 0..count {
        let curve = random_lane(&mut rng)?;
        let mut points = sample_rows(&curve, config.image_size, config.row_step);
        if config.noise > 0.0 {
            for p in &mut points {
                p.x += rng.random_range(-config.noise..=config.noise);
                p.y += rng.random_range(-config.noise..=config.noise);
            }
        }
        lanes.push(Polyline::new(points, config.image_size)?);
        curves.push(curve);
    }
    let key = format!("synthetic/{index:05}.jpg");
    Ok(SyntheticImage {
        record: AnnotationRecord::new(key, config.image_size, lanes)?,
        curves,
    })
}

/// The whole set, sorted by image key.
pub fn generate(config: &SyntheticConfig) -> Result<Vec<SyntheticImage>> {
    (0..config.images)
        .map(|i| generate_image(config, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_on_the_pixel_grid() {
        let config = SyntheticConfig {
            noise: 0.0,
            ..Default::default()
        };
        let img = generate_image(&config, 3).unwrap();
        assert!((2..=4).contains(&img.curves.len()));
        for (lane, curve) in img.record.lanes.iter().zip(&img.curves) {
            assert!(lane.len() >= 20);
            for px in lane.to_pixels() {
                assert!((px.y - (px.y / 10.0).round() * 10.0).abs() < 1e-9, "{px:?}");
            }
            assert!(curve.rms_distance(lane.points()) < 1e-9);
        }
    }

    #[test]
    fn images_are_independent_of_generation_order() {
        let config = SyntheticConfig {
            images: 5,
            ..Default::default()
        };
        let all = generate(&config).unwrap();
        let single = generate_image(&config, 4).unwrap();
        assert_eq!(all[4].record, single.record);
        assert_ne!(all[3].record, single.record);
    }
}
