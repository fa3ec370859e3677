//! The five subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use bezlane::bezier::SampleGrid;
use bezlane::dataset::{
    augment_labels, format_label, generate_labels, BezierLabel, LabelConfig, PredictionRecord,
};
use bezlane::matching::{
    classification_loss, distance_matrix, hungarian_match, hungarian_match_with_prior,
    local_max_filter, total_loss, QualityMatrix,
};
use bezlane::metrics::{culane_f1, lane_x_at_rows, tusimple_metrics, TusimpleLanes};

use crate::config::{InputFormat, Metric, RunConfig};
use crate::input::{
    annotation_entries, check_unique, detect_format, join_lines, load_labels, load_lanesets,
    load_predictions, load_tusimple, read_text, required, write_text,
};
use crate::{CliError, Outcome, EXIT_OK, EXIT_VALIDATION};

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| {
            CliError::Config(format!(
                "cannot start {} worker threads: {e}",
                cfg.parallelism
            ))
        })
}

fn grid(cfg: &RunConfig) -> Result<SampleGrid, CliError> {
    Ok(SampleGrid::new(3, cfg.sample_count, Default::default())?)
}

const MAX_LISTED_FAILURES: usize = 20;

type FitResult = Result<(BezierLabel, Vec<String>), String>;

/// Fits Bézier labels to every annotated image and writes them sorted by key.
///
/// Images that cannot be read or parsed are skipped and counted. The run
/// fails once the skipped fraction reaches `max_failure_fraction`; the label
/// file is written either way.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let input = required(&cfg.input, "input")?;
    let output = required(&cfg.output, "output")?;
    let entries = annotation_entries(cfg, input, cfg.input_format)?;
    let label_cfg = LabelConfig {
        param: cfg.param.into(),
        refine: cfg.refine,
    };

    let results: Vec<(String, FitResult)> = pool(cfg)?.install(|| {
        entries
            .into_par_iter()
            .map(|pending| {
                let (key, record) = pending.load(cfg);
                let result = record.map(|rec| {
                    let (label, failures) = generate_labels(&rec, &label_cfg);
                    let msgs = failures
                        .into_iter()
                        .map(|f| format!("{key}: lane {}: {}", f.lane, f.error))
                        .collect();
                    (label, msgs)
                });
                (key, result)
            })
            .collect()
    });

    let total = results.len();
    let mut labels = Vec::new();
    let mut failed_images = Vec::new();
    let mut failed_lanes = Vec::new();
    for (key, result) in results {
        match result {
            Ok((label, lanes)) => {
                labels.push(label);
                failed_lanes.extend(lanes);
            }
            Err(msg) => failed_images.push((key, msg)),
        }
    }
    labels.sort_by(|a, b| a.image_key.cmp(&b.image_key));
    failed_images.sort();
    failed_lanes.sort();
    check_unique(labels.iter().map(|l| l.image_key.as_str()), input)?;
    write_text(output, &join_lines(labels.iter().map(format_label)))?;

    let residuals: Vec<f64> = labels
        .iter()
        .flat_map(|l| l.fit_residual.iter().copied())
        .collect();
    let mean = if residuals.is_empty() {
        0.0
    } else {
        residuals.iter().sum::<f64>() / residuals.len() as f64
    };
    let max = residuals.iter().copied().fold(0.0, f64::max);

    let mut report = cfg.echo();
    let _ = writeln!(report, "\n[fit]");
    let _ = writeln!(report, "images = {total}");
    let _ = writeln!(report, "labelled = {}", labels.len());
    let _ = writeln!(report, "failed_images = {}", failed_images.len());
    let _ = writeln!(report, "curves = {}", residuals.len());
    let _ = writeln!(report, "failed_lanes = {}", failed_lanes.len());
    let _ = writeln!(report, "mean_residual = {mean:.3e}");
    let _ = writeln!(report, "max_residual = {max:.3e}");
    for (key, msg) in failed_images.iter().take(MAX_LISTED_FAILURES) {
        let _ = writeln!(report, "skipped {key}: {msg}");
    }
    for msg in failed_lanes.iter().take(MAX_LISTED_FAILURES) {
        let _ = writeln!(report, "lane not fitted: {msg}");
    }

    if total == 0 {
        log::warn!("{}: no images listed", input.display());
    }
    let exit_code = if !failed_images.is_empty()
        && failed_images.len() as f64 >= cfg.max_failure_fraction * total as f64
    {
        let _ = writeln!(
            report,
            "error: {} of {total} images failed (limit {:.2}%)",
            failed_images.len(),
            cfg.max_failure_fraction * 100.0
        );
        EXIT_VALIDATION
    } else {
        EXIT_OK
    };
    Ok(Outcome { report, exit_code })
}

#[derive(Serialize)]
struct EvalOutput<'a, R: Serialize> {
    metric: Metric,
    settings: serde_json::Value,
    missing_predictions: u64,
    report: &'a R,
}

/// Scores predictions against ground truth with the configured metric.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pred_path = required(&cfg.input, "input")?;
    let gt_path = required(&cfg.gt, "gt")?;
    let pool = pool(cfg)?;

    let mut report = cfg.echo();
    let json = match cfg.metric {
        Metric::Culane => {
            let (gts, preds) = pool.install(|| -> Result<_, CliError> {
                let gts = load_lanesets(cfg, gt_path, cfg.gt_format, true)?;
                let preds = load_lanesets(cfg, pred_path, cfg.input_format, false)?;
                Ok((gts, preds))
            })?;
            let missing = gts.keys().filter(|k| !preds.contains_key(*k)).count() as u64;
            let result = pool.install(|| culane_f1(&preds, &gts, &cfg.culane()));
            let _ = writeln!(report, "\n[eval]");
            let _ = writeln!(report, "metric = culane");
            let _ = writeln!(report, "images = {}", gts.len());
            let _ = writeln!(report, "missing_predictions = {missing}");
            let _ = writeln!(
                report,
                "unmatched_pred_keys = {}",
                result.unmatched_pred_keys
            );
            let _ = writeln!(report, "tp = {}", result.tp);
            let _ = writeln!(report, "fp = {}", result.fp);
            let _ = writeln!(report, "fn = {}", result.fn_);
            let _ = writeln!(report, "precision = {:.6}", result.precision);
            let _ = writeln!(report, "recall = {:.6}", result.recall);
            let _ = writeln!(report, "f1 = {:.6}", result.f1);
            serde_json::to_string_pretty(&EvalOutput {
                metric: Metric::Culane,
                settings: cfg.result_settings(),
                missing_predictions: missing,
                report: &result,
            })
        }
        Metric::Tusimple => {
            let (pairs, missing) = pool.install(|| tusimple_pairs(cfg, pred_path, gt_path))?;
            let result = tusimple_metrics(&pairs, &cfg.tusimple())?;
            let _ = writeln!(report, "\n[eval]");
            let _ = writeln!(report, "metric = tusimple");
            let _ = writeln!(report, "images = {}", pairs.len());
            let _ = writeln!(report, "missing_predictions = {missing}");
            let _ = writeln!(report, "accuracy = {:.6}", result.accuracy);
            let _ = writeln!(report, "fp_rate = {:.6}", result.fp_rate);
            let _ = writeln!(report, "fn_rate = {:.6}", result.fn_rate);
            serde_json::to_string_pretty(&EvalOutput {
                metric: Metric::Tusimple,
                settings: cfg.result_settings(),
                missing_predictions: missing,
                report: &result,
            })
        }
    }
    .expect("report serializes");
    if let Some(out) = &cfg.output {
        write_text(out, &(json + "\n"))?;
    }
    Ok(Outcome {
        report,
        exit_code: EXIT_OK,
    })
}

/// Pairs every ground-truth record with predictions on the same rows,
/// sorted by key. Returns the pairs and the number of images with no
/// prediction entry.
fn tusimple_pairs(
    cfg: &RunConfig,
    pred_path: &std::path::Path,
    gt_path: &std::path::Path,
) -> Result<(Vec<(TusimpleLanes, TusimpleLanes)>, u64), CliError> {
    let gt_text = read_text(gt_path)?;
    if detect_format(&gt_text, cfg.gt_format, gt_path)? != InputFormat::Tusimple {
        return Err(CliError::Config(
            "the tusimple metric needs TuSimple ground truth".into(),
        ));
    }
    let mut gts = load_tusimple(gt_path)?;
    gts.sort_by(|a, b| a.raw_file.cmp(&b.raw_file));

    let pred_text = read_text(pred_path)?;
    let preds: BTreeMap<String, TusimpleLanes> =
        match detect_format(&pred_text, cfg.input_format, pred_path)? {
            InputFormat::Tusimple => load_tusimple(pred_path)?
                .into_iter()
                .map(|r| (r.raw_file.clone(), r.as_lanes()))
                .collect(),
            _ => {
                // sample curves (or read polylines) and read x off at the gt rows
                let rows: BTreeMap<&str, &Vec<f64>> = gts
                    .iter()
                    .map(|g| (g.raw_file.as_str(), &g.h_samples))
                    .collect();
                load_lanesets(cfg, pred_path, cfg.input_format, false)?
                    .into_iter()
                    .filter_map(|(key, set)| {
                        let h = rows.get(key.as_str())?;
                        let lanes = set.lanes.iter().map(|l| lane_x_at_rows(l, h)).collect();
                        Some((
                            key,
                            TusimpleLanes {
                                h_samples: (*h).clone(),
                                lanes,
                            },
                        ))
                    })
                    .collect()
            }
        };
    let mut missing = 0;
    let pairs = gts
        .iter()
        .map(|g| {
            let gt = g.as_lanes();
            let pred = preds.get(&g.raw_file).cloned().unwrap_or_else(|| {
                missing += 1;
                TusimpleLanes {
                    h_samples: gt.h_samples.clone(),
                    lanes: Vec::new(),
                }
            });
            (pred, gt)
        })
        .collect();
    Ok((pairs, missing))
}

#[derive(Serialize)]
struct PairDump {
    label: usize,
    prediction: usize,
    quality: f64,
    distance: f64,
    fallback: bool,
}

#[derive(Serialize)]
struct LossDump {
    regression: f64,
    classification: f64,
    segmentation: f64,
    total: f64,
}

#[derive(Serialize)]
struct MatchDump {
    image_key: String,
    pairs: Vec<PairDump>,
    total_quality: f64,
    loss: LossDump,
}

fn match_image(
    cfg: &RunConfig,
    grid: &SampleGrid,
    label: &BezierLabel,
    pred: &PredictionRecord,
) -> Result<MatchDump, CliError> {
    let key = &label.image_key;
    let named = |e: bezlane::Error| CliError::Validation(format!("{key}: {e}"));
    let dist = distance_matrix(&label.curves, &pred.curves, grid).map_err(named)?;
    let q = QualityMatrix::from_distances(&dist, &pred.scores, cfg.alpha).map_err(named)?;
    let assignment = if cfg.local_max {
        let rows = pred
            .logits
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("{key}: --local-max needs logit rows")))?;
        let eligible: Vec<bool> = rows.iter().flat_map(|r| local_max_filter(r)).collect();
        hungarian_match_with_prior(&q, &eligible).map_err(named)?
    } else {
        hungarian_match(&q).map_err(named)?
    };
    let pairs: Vec<PairDump> = assignment
        .pairs
        .iter()
        .map(|p| PairDump {
            label: p.label,
            prediction: p.prediction,
            quality: p.quality,
            distance: dist[p.label][p.prediction],
            fallback: p.fallback,
        })
        .collect();
    let regression = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.distance).sum::<f64>() / pairs.len() as f64
    };
    let classification = cfg.cls_loss.unwrap_or_else(|| {
        classification_loss(&pred.scores, &assignment.predictions(), cfg.neg_weight)
    });
    let segmentation = cfg.seg_loss;
    let total = total_loss(
        regression,
        classification,
        segmentation,
        &cfg.loss_weights()?,
    );
    Ok(MatchDump {
        image_key: key.clone(),
        pairs,
        total_quality: assignment.total_quality,
        loss: LossDump {
            regression,
            classification,
            segmentation,
            total,
        },
    })
}

/// Matches predictions to labels per image and dumps assignments and loss
/// terms as one JSON object per image.
pub fn cmd_match(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let pred_path = required(&cfg.input, "input")?;
    let gt_path = required(&cfg.gt, "gt")?;
    let output = required(&cfg.output, "output")?;
    let labels: BTreeMap<String, BezierLabel> = load_labels(gt_path)?
        .into_iter()
        .map(|l| (l.image_key.clone(), l))
        .collect();
    let preds: BTreeMap<String, PredictionRecord> = load_predictions(pred_path)?
        .into_iter()
        .map(|p| (p.image_key.clone(), p))
        .collect();
    let grid = grid(cfg)?;

    let keys: Vec<&String> = labels.keys().filter(|k| preds.contains_key(*k)).collect();
    let dumps: Vec<MatchDump> = pool(cfg)?.install(|| {
        keys.par_iter()
            .map(|&k| match_image(cfg, &grid, &labels[k], &preds[k]))
            .collect::<Result<_, _>>()
    })?;
    let lines = dumps
        .iter()
        .map(|d| serde_json::to_string(d).expect("dump serializes"));
    write_text(output, &join_lines(lines))?;

    let n = dumps.len();
    let mean = |f: fn(&LossDump) -> f64| {
        if n == 0 {
            0.0
        } else {
            dumps.iter().map(|d| f(&d.loss)).sum::<f64>() / n as f64
        }
    };
    let mut report = cfg.echo();
    let _ = writeln!(report, "\n[match]");
    let _ = writeln!(report, "images = {n}");
    let _ = writeln!(report, "labels_without_predictions = {}", labels.len() - n);
    let _ = writeln!(
        report,
        "predictions_without_labels = {}",
        preds.keys().filter(|k| !labels.contains_key(*k)).count()
    );
    let _ = writeln!(
        report,
        "pairs = {}",
        dumps.iter().map(|d| d.pairs.len()).sum::<usize>()
    );
    let _ = writeln!(report, "mean_regression = {}", mean(|l| l.regression));
    let _ = writeln!(
        report,
        "mean_classification = {}",
        mean(|l| l.classification)
    );
    let _ = writeln!(report, "mean_segmentation = {}", mean(|l| l.segmentation));
    let _ = writeln!(report, "mean_total = {}", mean(|l| l.total));
    Ok(Outcome {
        report,
        exit_code: EXIT_OK,
    })
}

/// Applies a random affine augmentation per image, seeded by image key.
pub fn cmd_augment(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let input = required(&cfg.input, "input")?;
    let output = required(&cfg.output, "output")?;
    let policy = cfg.augment_policy();
    policy
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut labels = load_labels(input)?;
    labels.sort_by(|a, b| a.image_key.cmp(&b.image_key));

    let augmented: Vec<BezierLabel> = pool(cfg)?.install(|| {
        labels
            .par_iter()
            .map(|l| augment_labels(l, &policy.sample(cfg.seed, &l.image_key, l.image_size)))
            .collect()
    });
    write_text(output, &join_lines(augmented.iter().map(format_label)))?;

    let before: usize = labels.iter().map(|l| l.curves.len()).sum();
    let after: usize = augmented.iter().map(|l| l.curves.len()).sum();
    let mut report = cfg.echo();
    let _ = writeln!(report, "\n[augment]");
    let _ = writeln!(report, "images = {}", labels.len());
    let _ = writeln!(report, "curves_in = {before}");
    let _ = writeln!(report, "curves_out = {after}");
    let _ = writeln!(report, "dropped = {}", before - after);
    Ok(Outcome {
        report,
        exit_code: EXIT_OK,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `image_key,curve,index,t,x,y` rows (pixel coordinates) for every
/// sampled point of every curve.
pub fn cmd_sample(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let input = required(&cfg.input, "input")?;
    let output = required(&cfg.output, "output")?;
    let mut labels = load_labels(input)?;
    labels.sort_by(|a, b| a.image_key.cmp(&b.image_key));
    let grid = grid(cfg)?;

    let chunks: Vec<String> = pool(cfg)?.install(|| {
        labels
            .par_iter()
            .map(|l| -> Result<String, CliError> {
                let key = csv_field(&l.image_key);
                let mut out = String::new();
                for (c, curve) in l.curves.iter().enumerate() {
                    for (j, p) in curve.sample(&grid)?.into_iter().enumerate() {
                        let px = l.image_size.to_pixels(p);
                        let t = grid.ts()[j];
                        let _ = writeln!(out, "{key},{c},{j},{t:.6},{:.6},{:.6}", px.x, px.y);
                    }
                }
                Ok(out)
            })
            .collect::<Result<_, _>>()
    })?;
    let mut csv = String::from("image_key,curve,index,t,x,y\n");
    for chunk in &chunks {
        csv.push_str(chunk);
    }
    write_text(output, &csv)?;

    let points = chunks.iter().map(|c| c.lines().count()).sum::<usize>();
    let mut report = cfg.echo();
    let _ = writeln!(report, "\n[sample]");
    let _ = writeln!(report, "images = {}", labels.len());
    let _ = writeln!(report, "points = {points}");
    Ok(Outcome {
        report,
        exit_code: EXIT_OK,
    })
}
