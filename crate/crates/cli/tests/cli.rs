use std::path::{Path, PathBuf};
use std::process::Command;

use bezlane::bezier::BezierCurve;
use bezlane::dataset::{format_prediction, read_labels, PredictionRecord};
use bezlane::synthetic::{generate, SyntheticConfig};
use bezlane::ImageSize;
use bezlane_cli::synth::write_culane_dataset;
use bezlane_cli::*;

fn synthetic(dir: &Path, images: usize) -> PathBuf {
    let set = generate(&SyntheticConfig {
        images,
        ..Default::default()
    })
    .unwrap();
    write_culane_dataset(dir, &set).unwrap()
}

fn config(input: &Path, output: &Path) -> RunConfig {
    RunConfig {
        input: Some(input.to_path_buf()),
        output: Some(output.to_path_buf()),
        parallelism: 1,
        ..Default::default()
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bezlane"))
}

#[test]
fn fit_then_eval_recovers_sources() {
    let dir = tempfile::tempdir().unwrap();
    let index = synthetic(dir.path(), 20);
    let labels = dir.path().join("labels.jsonl");
    let out = cmd_fit(&config(&index, &labels)).unwrap();
    assert_eq!(out.exit_code, EXIT_OK);
    assert!(out.report.contains("labelled = 20"), "{}", out.report);
    assert!(out.report.contains("alpha = 0.8"));

    let report = dir.path().join("eval.json");
    let mut cfg = config(&labels, &report);
    cfg.gt = Some(index);
    let out = cmd_eval(&cfg).unwrap();
    assert!(out.report.contains("f1 = 1.000000"), "{}", out.report);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["report"]["f1"], 1.0);
    assert!(json["settings"].get("parallelism").is_none());
}

#[test]
fn noiseless_fit_reports_tiny_residual() {
    let dir = tempfile::tempdir().unwrap();
    let set = generate(&SyntheticConfig {
        images: 10,
        noise: 0.0,
        ..Default::default()
    })
    .unwrap();
    let index = write_culane_dataset(dir.path(), &set).unwrap();
    let labels = dir.path().join("labels.jsonl");
    let out = cmd_fit(&config(&index, &labels)).unwrap();
    let max: f64 = out
        .report
        .lines()
        .find_map(|l| l.strip_prefix("max_residual = "))
        .unwrap()
        .parse()
        .unwrap();
    // pixel files carry three decimals, about 1e-6 of the image width
    assert!(max < 1e-6, "{max}");
}

#[test]
fn empty_index_gives_empty_labels() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("list.txt");
    std::fs::write(&index, "").unwrap();
    let labels = dir.path().join("labels.jsonl");
    let out = cmd_fit(&config(&index, &labels)).unwrap();
    assert_eq!(out.exit_code, EXIT_OK);
    assert_eq!(std::fs::read_to_string(&labels).unwrap(), "");
}

#[test]
fn corrupt_annotation_is_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let index = synthetic(dir.path(), 200);
    std::fs::write(dir.path().join("synthetic/00007.lines.txt"), "1 2 3\n").unwrap();
    let labels = dir.path().join("labels.jsonl");
    let out = cmd_fit(&config(&index, &labels)).unwrap();
    assert_eq!(out.exit_code, EXIT_OK, "{}", out.report);
    assert!(out.report.contains("failed_images = 1"));
    assert!(out.report.contains("skipped synthetic/00007.jpg"));
    assert_eq!(
        read_labels(&std::fs::read_to_string(&labels).unwrap())
            .unwrap()
            .len(),
        199
    );

    // 2 of 200 is past the 1% limit
    std::fs::remove_file(dir.path().join("synthetic/00011.lines.txt")).unwrap();
    let out = cmd_fit(&config(&index, &labels)).unwrap();
    assert_eq!(out.exit_code, EXIT_VALIDATION);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = dir.path().join("o.jsonl");

    let status = bin()
        .args(["fit", "--alpha", "2"])
        .arg("-i")
        .arg(&missing)
        .arg("-o")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_CONFIG));
    let status = bin().args(["fit", "--bogus-flag"]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_CONFIG));
    let status = bin()
        .arg("fit")
        .arg("-i")
        .arg(&missing)
        .arg("-o")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_IO));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"image_key\":\"a\",\"image_size\":[1,1],\"curves\":[[0,0,1]],\"fit_residual\":[0]}\n",
    )
    .unwrap();
    let status = bin()
        .arg("sample")
        .arg("-i")
        .arg(&bad)
        .arg("-o")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_VALIDATION));
}

#[test]
fn missing_ground_truth_file_fails_eval() {
    let dir = tempfile::tempdir().unwrap();
    let index = synthetic(dir.path(), 3);
    std::fs::remove_file(dir.path().join("synthetic/00001.lines.txt")).unwrap();
    let mut cfg = config(&index, &dir.path().join("r.json"));
    cfg.gt = Some(index.clone());
    let err = cmd_eval(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_IO);
}

#[test]
fn env_overrides_config_file_and_flags_override_env() {
    let dir = tempfile::tempdir().unwrap();
    let index = synthetic(dir.path(), 2);
    let labels = dir.path().join("labels.jsonl");
    let toml = dir.path().join("run.toml");
    std::fs::write(&toml, "seed = 5\nneg-weight = 0.25\n").unwrap();
    let run = |extra: &[&str], env: Option<(&str, &str)>| {
        let mut cmd = bin();
        cmd.arg("fit")
            .arg("--config")
            .arg(&toml)
            .arg("-i")
            .arg(&index)
            .arg("-o")
            .arg(&labels);
        cmd.args(extra);
        if let Some((k, v)) = env {
            cmd.env(k, v);
        }
        String::from_utf8(cmd.output().unwrap().stdout).unwrap()
    };
    let out = run(&[], None);
    assert!(
        out.contains("seed = 5") && out.contains("neg-weight = 0.25"),
        "{out}"
    );
    let out = run(&[], Some(("BEZLANE_SEED", "9")));
    assert!(out.contains("seed = 9"), "{out}");
    let out = run(&["--seed", "11"], Some(("BEZLANE_SEED", "9")));
    assert!(out.contains("seed = 11"), "{out}");
}

fn prediction_file(dir: &Path, labels: &Path, scores: f64) -> PathBuf {
    let labels = read_labels(&std::fs::read_to_string(labels).unwrap()).unwrap();
    let text: String = labels
        .iter()
        .map(|l| {
            format_prediction(&PredictionRecord {
                image_key: l.image_key.clone(),
                image_size: l.image_size,
                curves: l.curves.clone(),
                scores: vec![scores; l.curves.len()],
                logits: None,
            }) + "\n"
        })
        .collect();
    let path = dir.join("preds.jsonl");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn match_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let index = synthetic(dir.path(), 5);
    let labels = dir.path().join("labels.jsonl");
    cmd_fit(&config(&index, &labels)).unwrap();
    let preds = prediction_file(dir.path(), &labels, 1.0);
    let dump = dir.path().join("match.jsonl");
    let mut cfg = config(&preds, &dump);
    cfg.gt = Some(labels);
    cfg.cls_loss = Some(0.25);
    cmd_match(&cfg).unwrap();
    for line in std::fs::read_to_string(&dump).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for pair in v["pairs"].as_array().unwrap() {
            assert_eq!(pair["quality"], 1.0);
            assert_eq!(pair["distance"], 0.0);
            assert_eq!(pair["label"], pair["prediction"]);
        }
        assert!((v["loss"]["total"].as_f64().unwrap() - 0.1 * 0.25).abs() < 1e-12);
    }
}

#[test]
fn match_rejects_scores_outside_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let index = synthetic(dir.path(), 2);
    let labels = dir.path().join("labels.jsonl");
    cmd_fit(&config(&index, &labels)).unwrap();
    let preds = prediction_file(dir.path(), &labels, 1.5);
    let mut cfg = config(&preds, &dir.path().join("m.jsonl"));
    cfg.gt = Some(labels);
    let err = cmd_match(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
    assert!(err.to_string().contains("synthetic/00000.jpg"), "{err}");
}

#[test]
fn match_with_local_max_prior() {
    let dir = tempfile::tempdir().unwrap();
    let curve = |x: f64| BezierCurve::from_flat(&[x, 0.9, x, 0.7, x, 0.6, x, 0.4]).unwrap();
    let size = ImageSize::new(590, 1640);
    let labels = dir.path().join("labels.jsonl");
    std::fs::write(
        &labels,
        format!(
            "{{\"image_key\":\"a\",\"image_size\":[590,1640],\"curves\":[{:?}],\"fit_residual\":[0.0]}}\n",
            curve(0.5).to_flat()
        ),
    )
    .unwrap();
    // prediction 1 sits on the label but its logit is not a local maximum
    let pred = PredictionRecord {
        image_key: "a".into(),
        image_size: size,
        curves: vec![curve(0.45), curve(0.5), curve(0.2)],
        scores: vec![0.9, 0.8, 0.95],
        logits: Some(vec![vec![0.1, 0.5, 2.0]]),
    };
    let preds = dir.path().join("p.jsonl");
    std::fs::write(&preds, format_prediction(&pred) + "\n").unwrap();
    let dump = dir.path().join("m.jsonl");
    let mut cfg = config(&preds, &dump);
    cfg.gt = Some(labels.clone());
    cmd_match(&cfg).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&dump).unwrap().trim()).unwrap();
    assert_eq!(v["pairs"][0]["prediction"], 1);
    cfg.local_max = true;
    cmd_match(&cfg).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&dump).unwrap().trim()).unwrap();
    assert_eq!(v["pairs"][0]["prediction"], 2);
    assert_eq!(v["pairs"][0]["fallback"], false);
}

#[test]
fn augment_zero_magnitude_is_byte_identical_and_seeded_runs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let index = synthetic(dir.path(), 30);
    let labels = dir.path().join("labels.jsonl");
    cmd_fit(&config(&index, &labels)).unwrap();

    let out = dir.path().join("aug.jsonl");
    let mut cfg = config(&labels, &out);
    cfg.max_rotation_deg = 0.0;
    cfg.max_translate_x_px = 0.0;
    cfg.max_translate_y_px = 0.0;
    cfg.max_scale = 0.0;
    cfg.flip_probability = 0.0;
    cmd_augment(&cfg).unwrap();
    let (a, b) = (
        std::fs::read_to_string(&out).unwrap(),
        std::fs::read_to_string(&labels).unwrap(),
    );
    if let Some((x, y)) = a.lines().zip(b.lines()).find(|(x, y)| x != y) {
        panic!("{x}\n{y}");
    }
    assert_eq!(a, b);

    let mut cfg = config(&labels, &out);
    cfg.seed = 42;
    cmd_augment(&cfg).unwrap();
    let first = std::fs::read(&out).unwrap();
    cmd_augment(&cfg).unwrap();
    assert_eq!(first, std::fs::read(&out).unwrap());
    assert_ne!(first, std::fs::read(&labels).unwrap());
    for label in read_labels(std::str::from_utf8(&first).unwrap()).unwrap() {
        for c in label.curves {
            for p in c
                .sample(&bezlane::bezier::SampleGrid::cubic_default())
                .unwrap()
            {
                assert!((-1e-6..=1.0 + 1e-6).contains(&p.x) && (-1e-6..=1.0 + 1e-6).contains(&p.y));
            }
        }
    }

    let mut bad = config(&labels, &out);
    bad.max_scale = -0.5;
    assert_eq!(cmd_augment(&bad).unwrap_err().exit_code(), EXIT_CONFIG);
}

#[test]
fn sample_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let index = synthetic(dir.path(), 2);
    let labels = dir.path().join("labels.jsonl");
    cmd_fit(&config(&index, &labels)).unwrap();
    let csv = dir.path().join("pts.csv");
    let mut cfg = config(&labels, &csv);
    cfg.sample_count = 5;
    cmd_sample(&cfg).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("image_key,curve,index,t,x,y"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[..4], ["synthetic/00000.jpg", "0", "0", "0.000000"]);
    let curves: usize = read_labels(&std::fs::read_to_string(&labels).unwrap())
        .unwrap()
        .iter()
        .map(|l| l.curves.len())
        .sum();
    assert_eq!(text.lines().count(), 1 + 5 * curves);
}

#[test]
fn eval_fixture_counts() {
    // two ground-truth lanes, three predictions of which two overlap them
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("list.txt"), "img.jpg\n").unwrap();
    std::fs::write(
        dir.path().join("img.lines.txt"),
        "100 500 100 100\n400 500 400 100\n",
    )
    .unwrap();
    std::fs::create_dir(dir.path().join("pred")).unwrap();
    std::fs::write(dir.path().join("pred/list.txt"), "img.jpg\n").unwrap();
    std::fs::write(
        dir.path().join("pred/img.lines.txt"),
        "102 500 102 100\n401 500 401 100\n900 500 900 100\n",
    )
    .unwrap();
    let report = dir.path().join("r.json");
    let mut cfg = config(&dir.path().join("pred/list.txt"), &report);
    cfg.gt = Some(dir.path().join("list.txt"));
    let out = cmd_eval(&cfg).unwrap();
    assert!(
        out.report.contains("precision = 0.666667"),
        "{}",
        out.report
    );
    assert!(out.report.contains("recall = 1.000000"));
    assert!(out.report.contains("f1 = 0.800000"));
}

#[test]
fn tusimple_eval_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.json");
    std::fs::write(
        &gt,
        concat!(
            r#"{"lanes":[[-2,100,110,120],[300,310,-2,-2]],"h_samples":[150,160,170,180],"raw_file":"b.jpg"}"#,
            "\n",
            r#"{"lanes":[[50,60,70,80]],"h_samples":[150,160,170,180],"raw_file":"a.jpg"}"#,
            "\n"
        ),
    )
    .unwrap();
    let mut cfg = config(&gt, &dir.path().join("r.json"));
    cfg.gt = Some(gt.clone());
    cfg.metric = Metric::Tusimple;
    let out = cmd_eval(&cfg).unwrap();
    assert!(out.report.contains("accuracy = 1.000000"), "{}", out.report);
    assert!(out.report.contains("fp_rate = 0.000000"));
}
