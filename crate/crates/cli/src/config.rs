//! Run configuration: defaults, optional TOML file, `BEZLANE_*` environment
//! variables and command-line flags, in increasing order of precedence.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use bezlane::bezier::ParamMethod;
use bezlane::dataset::AugmentPolicy;
use bezlane::matching::{LossWeights, DEFAULT_ALPHA, DEFAULT_NEG_WEIGHT};
use bezlane::metrics::{CulaneConfig, TusimpleConfig, DEFAULT_IOU_THRESHOLD, DEFAULT_LANE_WIDTH};
use bezlane::ImageSize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// Decide from the file contents.
    #[default]
    Auto,
    /// Index file listing images with `<image>.lines.txt` annotations.
    Culane,
    /// Newline-delimited TuSimple records.
    Tusimple,
    /// Native Bézier label file.
    Labels,
    /// Native prediction file.
    Predictions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Culane,
    Tusimple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Param {
    #[default]
    ChordLength,
    Centripetal,
    Uniform,
}

impl From<Param> for ParamMethod {
    fn from(p: Param) -> Self {
        match p {
            Param::ChordLength => ParamMethod::ChordLength,
            Param::Centripetal => ParamMethod::Centripetal,
            Param::Uniform => ParamMethod::Uniform,
        }
    }
}

/// Fully resolved settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Ground truth for `eval` and `match`.
    pub gt: Option<PathBuf>,
    /// Directory that CULane index entries are relative to; defaults to the
    /// index file's directory.
    pub data_root: Option<PathBuf>,
    pub input_format: InputFormat,
    pub gt_format: InputFormat,
    /// Image size for formats that do not record it; per-format default.
    pub image_height: Option<u32>,
    pub image_width: Option<u32>,

    pub order: usize,
    pub sample_count: usize,
    pub param: Param,
    pub refine: bool,
    /// `fit` exits nonzero once this fraction of images fails.
    pub max_failure_fraction: f64,

    pub alpha: f64,
    pub neg_weight: f64,
    pub lambdas: [f64; 3],
    pub local_max: bool,
    /// Classification loss to report; computed from scores when absent.
    pub cls_loss: Option<f64>,
    pub seg_loss: f64,

    pub metric: Metric,
    pub iou_threshold: f64,
    pub lane_width_px: f64,
    pub point_threshold_px: f64,
    pub match_fraction: f64,

    pub max_rotation_deg: f64,
    pub max_translate_x_px: f64,
    pub max_translate_y_px: f64,
    pub max_scale: f64,
    pub flip_probability: f64,

    /// Worker threads; 0 uses every available core.
    pub parallelism: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let aug = AugmentPolicy::default();
        let w = LossWeights::default();
        Self {
            input: None,
            output: None,
            gt: None,
            data_root: None,
            input_format: InputFormat::Auto,
            gt_format: InputFormat::Auto,
            image_height: None,
            image_width: None,
            order: 3,
            sample_count: 100,
            param: Param::ChordLength,
            refine: true,
            max_failure_fraction: 0.01,
            alpha: DEFAULT_ALPHA,
            neg_weight: DEFAULT_NEG_WEIGHT,
            lambdas: [w.regression, w.classification, w.segmentation],
            local_max: false,
            cls_loss: None,
            seg_loss: 0.0,
            metric: Metric::Culane,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            lane_width_px: DEFAULT_LANE_WIDTH,
            point_threshold_px: 20.0,
            match_fraction: 0.85,
            max_rotation_deg: aug.max_rotation_deg,
            max_translate_x_px: aug.max_translate_x,
            max_translate_y_px: aug.max_translate_y,
            max_scale: aug.max_scale,
            flip_probability: aug.flip_probability,
            parallelism: 0,
            seed: 0,
        }
    }
}

/// Command-line overrides. Every flag is optional so that unset flags fall
/// through to the config file and defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with any of the settings below (kebab-case keys).
    #[arg(long, env = "BEZLANE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, short, env = "BEZLANE_INPUT")]
    pub input: Option<PathBuf>,
    #[arg(long, short, env = "BEZLANE_OUTPUT")]
    pub output: Option<PathBuf>,
    #[arg(long, env = "BEZLANE_GT")]
    pub gt: Option<PathBuf>,
    #[arg(long, env = "BEZLANE_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    #[arg(long, value_enum, env = "BEZLANE_INPUT_FORMAT")]
    pub input_format: Option<InputFormat>,
    #[arg(long, value_enum, env = "BEZLANE_GT_FORMAT")]
    pub gt_format: Option<InputFormat>,
    #[arg(long, env = "BEZLANE_IMAGE_HEIGHT")]
    pub image_height: Option<u32>,
    #[arg(long, env = "BEZLANE_IMAGE_WIDTH")]
    pub image_width: Option<u32>,
    #[arg(long, env = "BEZLANE_ORDER")]
    pub order: Option<usize>,
    #[arg(long, env = "BEZLANE_SAMPLE_COUNT")]
    pub sample_count: Option<usize>,
    #[arg(long, value_enum, env = "BEZLANE_PARAM")]
    pub param: Option<Param>,
    #[arg(long, env = "BEZLANE_REFINE")]
    pub refine: Option<bool>,
    #[arg(long, env = "BEZLANE_MAX_FAILURE_FRACTION")]
    pub max_failure_fraction: Option<f64>,
    #[arg(long, env = "BEZLANE_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, env = "BEZLANE_NEG_WEIGHT")]
    pub neg_weight: Option<f64>,
    /// Regression, classification and segmentation weights.
    #[arg(long, value_delimiter = ',', num_args = 3, env = "BEZLANE_LAMBDAS")]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, env = "BEZLANE_LOCAL_MAX")]
    pub local_max: Option<bool>,
    #[arg(long, env = "BEZLANE_CLS_LOSS")]
    pub cls_loss: Option<f64>,
    #[arg(long, env = "BEZLANE_SEG_LOSS")]
    pub seg_loss: Option<f64>,
    #[arg(long, value_enum, env = "BEZLANE_METRIC")]
    pub metric: Option<Metric>,
    #[arg(long, env = "BEZLANE_IOU_THRESHOLD")]
    pub iou_threshold: Option<f64>,
    #[arg(long, env = "BEZLANE_LANE_WIDTH_PX")]
    pub lane_width_px: Option<f64>,
    #[arg(long, env = "BEZLANE_POINT_THRESHOLD_PX")]
    pub point_threshold_px: Option<f64>,
    #[arg(long, env = "BEZLANE_MATCH_FRACTION")]
    pub match_fraction: Option<f64>,
    #[arg(long, env = "BEZLANE_MAX_ROTATION_DEG")]
    pub max_rotation_deg: Option<f64>,
    #[arg(long, env = "BEZLANE_MAX_TRANSLATE_X_PX")]
    pub max_translate_x_px: Option<f64>,
    #[arg(long, env = "BEZLANE_MAX_TRANSLATE_Y_PX")]
    pub max_translate_y_px: Option<f64>,
    #[arg(long, env = "BEZLANE_MAX_SCALE")]
    pub max_scale: Option<f64>,
    #[arg(long, env = "BEZLANE_FLIP_PROBABILITY")]
    pub flip_probability: Option<f64>,
    #[arg(long, short = 'j', env = "BEZLANE_PARALLELISM")]
    pub parallelism: Option<usize>,
    #[arg(long, env = "BEZLANE_SEED")]
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($cfg:ident, $ov:ident; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $ov.$field.clone() { $cfg.$field = v.into(); })*
    };
}

impl Overrides {
    /// Loads the config file, if any, and applies the flags on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let ov = self;
        overlay!(cfg, ov;
            input_format, gt_format, order, sample_count, param, refine,
            max_failure_fraction, alpha, neg_weight, local_max, seg_loss, metric,
            iou_threshold, lane_width_px, point_threshold_px, match_fraction,
            max_rotation_deg, max_translate_x_px, max_translate_y_px, max_scale,
            flip_probability, parallelism, seed,
        );
        // fields that are themselves optional
        for (slot, value) in [
            (&mut cfg.input, &ov.input),
            (&mut cfg.output, &ov.output),
            (&mut cfg.gt, &ov.gt),
            (&mut cfg.data_root, &ov.data_root),
        ] {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        if ov.image_height.is_some() {
            cfg.image_height = ov.image_height;
        }
        if ov.image_width.is_some() {
            cfg.image_width = ov.image_width;
        }
        if ov.cls_loss.is_some() {
            cfg.cls_loss = ov.cls_loss;
        }
        if let Some(l) = &ov.lambdas {
            cfg.lambdas = l.as_slice().try_into().map_err(|_| {
                CliError::Config(format!("--lambdas takes 3 values, got {}", l.len()))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        let positive = [
            ("iou-threshold", self.iou_threshold),
            ("lane-width-px", self.lane_width_px),
            ("point-threshold-px", self.point_threshold_px),
            ("match-fraction", self.match_fraction),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.iou_threshold > 1.0 || self.match_fraction > 1.0 {
            return fail("iou-threshold and match-fraction must not exceed 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.neg_weight.is_finite() && self.neg_weight >= 0.0) {
            return fail(format!(
                "neg-weight must be non-negative, got {}",
                self.neg_weight
            ));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return fail(format!(
                "max-failure-fraction must lie in [0, 1], got {}",
                self.max_failure_fraction
            ));
        }
        // native labels store cubic curves only
        if self.order != 3 {
            return fail(format!("order must be 3, got {}", self.order));
        }
        if self.sample_count < 2 {
            return fail(format!(
                "sample-count must be at least 2, got {}",
                self.sample_count
            ));
        }
        self.loss_weights()?;
        if let Some(c) = self.cls_loss {
            if !(c.is_finite() && c >= 0.0) {
                return fail(format!("cls-loss must be non-negative, got {c}"));
            }
        }
        if !(self.seg_loss.is_finite() && self.seg_loss >= 0.0) {
            return fail(format!(
                "seg-loss must be non-negative, got {}",
                self.seg_loss
            ));
        }
        self.augment_policy()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if matches!(self.image_height, Some(0)) || matches!(self.image_width, Some(0)) {
            return fail("image size must be positive".into());
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> Result<LossWeights, CliError> {
        let [r, c, s] = self.lambdas;
        LossWeights::new(r, c, s).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn culane(&self) -> CulaneConfig {
        CulaneConfig {
            iou_threshold: self.iou_threshold,
            lane_width: self.lane_width_px,
        }
    }

    pub fn tusimple(&self) -> TusimpleConfig {
        TusimpleConfig {
            point_threshold: self.point_threshold_px,
            match_fraction: self.match_fraction,
        }
    }

    pub fn augment_policy(&self) -> AugmentPolicy {
        AugmentPolicy {
            max_rotation_deg: self.max_rotation_deg,
            max_translate_x: self.max_translate_x_px,
            max_translate_y: self.max_translate_y_px,
            max_scale: self.max_scale,
            flip_probability: self.flip_probability,
        }
    }

    /// Image size from the config, falling back to `default`.
    pub fn image_size_or(&self, default: ImageSize) -> ImageSize {
        ImageSize::new(
            self.image_height.unwrap_or(default.height),
            self.image_width.unwrap_or(default.width),
        )
    }

    /// The settings that influence results, as written into output files.
    /// Paths and the thread count are left out so that outputs do not depend
    /// on where or how wide a run was.
    pub fn result_settings(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            for key in ["input", "output", "gt", "data-root", "parallelism"] {
                map.remove(key);
            }
        }
        v
    }

    /// `key = value` lines echoing every setting.
    pub fn echo(&self) -> String {
        let mut out = String::from("[config]\n");
        if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(self) {
            for (k, v) in map {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}
