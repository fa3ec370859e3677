//! Annotation parsing, Bézier label generation, label-space augmentation and
//! the native label file format.

mod culane;
mod labels;
mod tusimple;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bezier::{
    fit_least_squares, Affine, BezierCurve, FitOptions, ParamMethod, Polyline, Rect,
};
use crate::{Error, ImageSize, Point, Result};

pub use culane::{parse_culane, write_culane, CULANE_IMAGE_SIZE};
pub use labels::{
    format_label, format_prediction, parse_label, parse_prediction, read_labels, read_predictions,
    PredictionRecord, LABEL_DECIMALS,
};
pub use tusimple::{parse_tusimple, TusimpleRecord, TUSIMPLE_IMAGE_SIZE};

/// Annotation points may lie this far outside the image, as a fraction of
/// its size, before the record is rejected.
pub const GUARD_BAND: f64 = 0.5;

pub(crate) fn check_guard_band(lane: &Polyline) -> std::result::Result<(), String> {
    let range = -GUARD_BAND..=1.0 + GUARD_BAND;
    match lane
        .points()
        .iter()
        .find(|p| !range.contains(&p.x) || !range.contains(&p.y))
    {
        Some(p) => {
            let px = lane.image_size().to_pixels(*p);
            Err(format!("point ({}, {}) outside the guard band", px.x, px.y))
        }
        None => Ok(()),
    }
}

/// Annotated lanes of one image. Polylines are normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_key: String,
    pub image_size: ImageSize,
    pub lanes: Vec<Polyline>,
}

impl AnnotationRecord {
    pub fn new(image_key: String, image_size: ImageSize, lanes: Vec<Polyline>) -> Result<Self> {
        if image_key.is_empty() {
            return Err(Error::Validation("empty image key".into()));
        }
        for (i, lane) in lanes.iter().enumerate() {
            if lane.image_size() != image_size {
                return Err(Error::Validation(format!(
                    "{image_key}: lane {i} normalized with a different image size"
                )));
            }
            check_guard_band(lane)
                .map_err(|m| Error::Validation(format!("{image_key}: lane {i}: {m}")))?;
        }
        Ok(Self {
            image_key,
            image_size,
            lanes,
        })
    }
}

/// Fitted cubic curves for one image, in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierLabel {
    pub image_key: String,
    pub image_size: ImageSize,
    pub curves: Vec<BezierCurve>,
    /// RMS closest-point distance of each lane's annotation points to its
    /// curve, in normalized units.
    pub fit_residual: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelConfig {
    pub param: ParamMethod,
    pub refine: bool,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            param: ParamMethod::ChordLength,
            refine: true,
        }
    }
}

/// A lane that could not be fitted.
#[derive(Debug)]
pub struct LaneFailure {
    pub lane: usize,
    pub error: Error,
}

/// Fits a cubic to every lane of the record. A lane that fails to fit is
/// reported and skipped; the remaining lanes are still labelled.
pub fn generate_labels(
    record: &AnnotationRecord,
    config: &LabelConfig,
) -> (BezierLabel, Vec<LaneFailure>) {
    let options = FitOptions {
        order: 3,
        param: config.param,
        refine: config.refine,
    };
    let mut curves = Vec::with_capacity(record.lanes.len());
    let mut fit_residual = Vec::with_capacity(record.lanes.len());
    let mut failures = Vec::new();
    for (i, lane) in record.lanes.iter().enumerate() {
        match fit_least_squares(lane, &options) {
            Ok(fit) => {
                fit_residual.push(fit.curve.rms_distance(lane.points()));
                curves.push(fit.curve);
            }
            Err(error) => {
                log::warn!("{}: lane {i} not fitted: {error}", record.image_key);
                failures.push(LaneFailure { lane: i, error });
            }
        }
    }
    let label = BezierLabel {
        image_key: record.image_key.clone(),
        image_size: record.image_size,
        curves,
        fit_residual,
    };
    (label, failures)
}

/// A concrete augmentation in normalized coordinates: optional horizontal
/// flip followed by an affine map.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Augmentation {
    pub flip: bool,
    pub affine: Affine,
}

impl Augmentation {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Converts a pixel-space affine map to normalized coordinates.
    pub fn from_pixel_affine(pixel: &Affine, image_size: ImageSize, flip: bool) -> Self {
        let (w, h) = (image_size.width as f64, image_size.height as f64);
        let affine = Affine::scale_xy(w, h)
            .then(pixel)
            .then(&Affine::scale_xy(1.0 / w, 1.0 / h));
        Self { flip, affine }
    }

    pub fn to_affine(&self) -> Affine {
        if self.flip {
            Affine::mirror_x(0.5).then(&self.affine)
        } else {
            self.affine
        }
    }
}

/// Transforms every curve, then clips it to the unit box. Curves with no
/// in-box part are dropped along with their residual entry.
pub fn augment_labels(label: &BezierLabel, augmentation: &Augmentation) -> BezierLabel {
    let affine = augmentation.to_affine();
    let unit = Rect::unit();
    let mut curves = Vec::with_capacity(label.curves.len());
    let mut fit_residual = Vec::with_capacity(label.curves.len());
    for (curve, &residual) in label.curves.iter().zip(&label.fit_residual) {
        let moved = curve.transformed(&affine);
        match moved.clip_to_box(&unit) {
            Ok(Some(clipped)) => {
                curves.push(clipped);
                fit_residual.push(residual);
            }
            Ok(None) => {}
            Err(e) => log::warn!("{}: curve not clipped: {e}", label.image_key),
        }
    }
    BezierLabel {
        image_key: label.image_key.clone(),
        image_size: label.image_size,
        curves,
        fit_residual,
    }
}

/// Bounds for random augmentation, in pixels and degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    pub max_rotation_deg: f64,
    pub max_translate_x: f64,
    pub max_translate_y: f64,
    /// Scale factor is drawn from `[1 - max_scale, 1 + max_scale]`.
    pub max_scale: f64,
    pub flip_probability: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            max_rotation_deg: 10.0,
            max_translate_x: 50.0,
            max_translate_y: 20.0,
            max_scale: 0.2,
            flip_probability: 0.5,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl AugmentPolicy {
    pub fn none() -> Self {
        Self {
            max_rotation_deg: 0.0,
            max_translate_x: 0.0,
            max_translate_y: 0.0,
            max_scale: 0.0,
            flip_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bounded = |name: &str, v: f64, hi: f64| {
            if v.is_finite() && (0.0..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::argument(format!(
                    "{name} must lie in [0, {hi}], got {v}"
                )))
            }
        };
        bounded("max rotation", self.max_rotation_deg, 180.0)?;
        bounded("max x translation", self.max_translate_x, f64::MAX)?;
        bounded("max y translation", self.max_translate_y, f64::MAX)?;
        if !(self.max_scale.is_finite() && (0.0..1.0).contains(&self.max_scale)) {
            return Err(Error::argument(format!(
                "max scale must lie in [0, 1), got {}",
                self.max_scale
            )));
        }
        bounded("flip probability", self.flip_probability, 1.0)
    }

    /// Draws the augmentation for one image. The draw depends only on the
    /// seed and the image key, so results do not depend on processing order.
    /// Bounds that are zero consume no randomness.
    pub fn sample(&self, seed: u64, image_key: &str, image_size: ImageSize) -> Augmentation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(image_key.as_bytes()));
        let mut symmetric = |max: f64| {
            if max > 0.0 {
                rng.random_range(-max..=max)
            } else {
                0.0
            }
        };
        let angle = symmetric(self.max_rotation_deg).to_radians();
        let dx = symmetric(self.max_translate_x);
        let dy = symmetric(self.max_translate_y);
        let scale = 1.0 + symmetric(self.max_scale);
        let flip = self.flip_probability > 0.0 && rng.random_bool(self.flip_probability);

        let center = Point::new(
            image_size.width as f64 / 2.0,
            image_size.height as f64 / 2.0,
        );
        let mut pixel = Affine::identity();
        if angle != 0.0 {
            pixel = pixel.then(&Affine::rotation_about(center, angle));
        }
        if scale != 1.0 {
            pixel = pixel.then(&Affine::scale_about(center, scale));
        }
        if dx != 0.0 || dy != 0.0 {
            pixel = pixel.then(&Affine::translation(dx, dy));
        }
        if pixel == Affine::identity() {
            return Augmentation {
                flip,
                affine: pixel,
            };
        }
        Augmentation::from_pixel_affine(&pixel, image_size, flip)
    }
}
