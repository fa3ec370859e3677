//! Reading and writing the files a command works on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use bezlane::bezier::SampleGrid;
use bezlane::dataset::{
    parse_culane, read_labels, read_predictions, AnnotationRecord, BezierLabel, PredictionRecord,
    TusimpleRecord, CULANE_IMAGE_SIZE, TUSIMPLE_IMAGE_SIZE,
};
use bezlane::metrics::LaneSet;

use crate::config::{InputFormat, RunConfig};
use crate::CliError;

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Joins lines with `\n`, ending with a newline when non-empty.
pub(crate) fn join_lines(lines: impl IntoIterator<Item = String>) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub(crate) fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

/// Resolves `Auto` from the first non-blank line: JSON objects are told
/// apart by their keys, anything else is a CULane index.
pub(crate) fn detect_format(
    text: &str,
    requested: InputFormat,
    path: &Path,
) -> Result<InputFormat, CliError> {
    if requested != InputFormat::Auto {
        return Ok(requested);
    }
    let Some(first) = text.lines().map(str::trim).find(|l| !l.is_empty()) else {
        return Ok(InputFormat::Culane);
    };
    if !first.starts_with('{') {
        return Ok(InputFormat::Culane);
    }
    let value: serde_json::Value = serde_json::from_str(first)
        .map_err(|e| CliError::Validation(format!("{}: line 1: {e}", path.display())))?;
    let has = |k: &str| value.get(k).is_some();
    if has("raw_file") {
        Ok(InputFormat::Tusimple)
    } else if has("fit_residual") {
        Ok(InputFormat::Labels)
    } else if has("scores") {
        Ok(InputFormat::Predictions)
    } else {
        Err(CliError::Validation(format!(
            "{}: cannot tell the file format; pass --input-format",
            path.display()
        )))
    }
}

/// One entry of an annotation source, not yet parsed.
pub(crate) enum Pending {
    Culane { key: String, path: PathBuf },
    Tusimple { line_no: usize, line: String },
}

/// Outcome of loading one image: the key it is known by and either the
/// record or the reason it was skipped.
pub(crate) type Loaded = (String, Result<AnnotationRecord, String>);

impl Pending {
    pub(crate) fn load(self, cfg: &RunConfig) -> Loaded {
        match self {
            Pending::Culane { key, path } => {
                let size = cfg.image_size_or(CULANE_IMAGE_SIZE);
                let result = std::fs::read_to_string(&path)
                    .map_err(|e| format!("{}: {e}", path.display()))
                    .and_then(|text| {
                        parse_culane(&text, size).map_err(|e| format!("{}: {e}", path.display()))
                    })
                    .and_then(|lanes| {
                        AnnotationRecord::new(key.clone(), size, lanes).map_err(|e| e.to_string())
                    });
                (key, result)
            }
            Pending::Tusimple { line_no, line } => {
                let size = cfg.image_size_or(TUSIMPLE_IMAGE_SIZE);
                match TusimpleRecord::parse(&line) {
                    Ok(rec) => {
                        let key = rec.raw_file.clone();
                        let result = rec.to_annotation(size).map_err(|e| e.to_string());
                        (key, result)
                    }
                    Err(e) => (
                        format!("line {line_no}"),
                        Err(format!("line {line_no}: {e}")),
                    ),
                }
            }
        }
    }
}

/// Entries of a CULane index: the first token of each line is an image path
/// relative to `root`; its lanes are in the sibling `.lines.txt` file.
fn culane_entries(text: &str, root: &Path) -> Vec<(String, PathBuf)> {
    text.lines()
        .filter_map(|l| l.split_whitespace().next())
        .map(|token| {
            let key = token.trim_start_matches('/').to_string();
            let path = root.join(&key).with_extension("lines.txt");
            (key, path)
        })
        .collect()
}

fn data_root(cfg: &RunConfig, index: &Path) -> PathBuf {
    cfg.data_root
        .clone()
        .or_else(|| index.parent().map(Path::to_path_buf))
        .unwrap_or_default()
}

/// Lists the annotation entries of `path` without parsing them.
pub(crate) fn annotation_entries(
    cfg: &RunConfig,
    path: &Path,
    format: InputFormat,
) -> Result<Vec<Pending>, CliError> {
    let text = read_text(path)?;
    match detect_format(&text, format, path)? {
        InputFormat::Culane => Ok(culane_entries(&text, &data_root(cfg, path))
            .into_iter()
            .map(|(key, path)| Pending::Culane { key, path })
            .collect()),
        InputFormat::Tusimple => Ok(text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| Pending::Tusimple {
                line_no: i + 1,
                line: l.to_string(),
            })
            .collect()),
        other => Err(CliError::Config(format!(
            "{}: expected lane annotations, found {other:?} input",
            path.display()
        ))),
    }
}

pub(crate) fn check_unique<'a>(
    keys: impl IntoIterator<Item = &'a str>,
    what: &Path,
) -> Result<(), CliError> {
    let mut seen = std::collections::BTreeSet::new();
    for key in keys {
        if !seen.insert(key) {
            return Err(CliError::Validation(format!(
                "{}: duplicate image key {key:?}",
                what.display()
            )));
        }
    }
    Ok(())
}

pub(crate) fn load_labels(path: &Path) -> Result<Vec<BezierLabel>, CliError> {
    let text = read_text(path)?;
    let labels =
        read_labels(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    check_unique(labels.iter().map(|l| l.image_key.as_str()), path)?;
    Ok(labels)
}

pub(crate) fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let text = read_text(path)?;
    let preds = read_predictions(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    check_unique(preds.iter().map(|p| p.image_key.as_str()), path)?;
    Ok(preds)
}

pub(crate) fn load_tusimple(path: &Path) -> Result<Vec<TusimpleRecord>, CliError> {
    let text = read_text(path)?;
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            TusimpleRecord::parse(l).map_err(|e| {
                CliError::Validation(format!("{}: line {}: {e}", path.display(), i + 1))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    check_unique(records.iter().map(|r| r.raw_file.as_str()), path)?;
    Ok(records)
}

/// Loads any supported source as pixel-space lanes keyed by image.
///
/// With `strict`, unreadable or malformed per-image files are errors;
/// otherwise they are logged and the image gets no lanes.
pub(crate) fn load_lanesets(
    cfg: &RunConfig,
    path: &Path,
    format: InputFormat,
    strict: bool,
) -> Result<BTreeMap<String, LaneSet>, CliError> {
    let text = read_text(path)?;
    let grid = SampleGrid::new(3, cfg.sample_count, Default::default())?;
    let pairs: Vec<(String, LaneSet)> = match detect_format(&text, format, path)? {
        InputFormat::Labels => load_labels(path)?
            .into_par_iter()
            .map(|l| {
                Ok((
                    l.image_key,
                    LaneSet::from_curves(&l.curves, l.image_size, &grid)?,
                ))
            })
            .collect::<Result<_, CliError>>()?,
        InputFormat::Predictions => load_predictions(path)?
            .into_par_iter()
            .map(|p| {
                Ok((
                    p.image_key,
                    LaneSet::from_curves(&p.curves, p.image_size, &grid)?,
                ))
            })
            .collect::<Result<_, CliError>>()?,
        InputFormat::Tusimple => {
            let size = cfg.image_size_or(TUSIMPLE_IMAGE_SIZE);
            load_tusimple(path)?
                .into_par_iter()
                .map(|r| {
                    let rec = r.to_annotation(size)?;
                    let lanes = rec.lanes.iter().map(|l| l.to_pixels()).collect();
                    Ok((rec.image_key, LaneSet::new(lanes, size)))
                })
                .collect::<Result<_, CliError>>()?
        }
        InputFormat::Culane | InputFormat::Auto => {
            let size = cfg.image_size_or(CULANE_IMAGE_SIZE);
            let entries = culane_entries(&text, &data_root(cfg, path));
            check_unique(entries.iter().map(|(k, _)| k.as_str()), path)?;
            entries
                .into_par_iter()
                .map(|(key, file)| {
                    let parsed = match std::fs::read_to_string(&file) {
                        Ok(text) => parse_culane(&text, size)
                            .map_err(|e| CliError::Validation(format!("{}: {e}", file.display()))),
                        Err(e) => Err(CliError::io(&file, e)),
                    };
                    let lanes = match parsed {
                        Ok(lanes) => lanes.iter().map(|l| l.to_pixels()).collect(),
                        Err(e) if !strict => {
                            log::warn!("{e}; treating {key} as having no lanes");
                            Vec::new()
                        }
                        Err(e) => return Err(e),
                    };
                    Ok((key, LaneSet::new(lanes, size)))
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    check_unique(pairs.iter().map(|(k, _)| k.as_str()), path)?;
    Ok(pairs.into_iter().collect())
}
