use std::path::{Path, PathBuf};
use std::process::Command;

use entseg::annotation::{origins, EntityDataset};
use entseg::predictions::{load_resolved, PredictionFile};
use entseg::resolver::validate_prediction;
use entseg_cli::{run, EXIT_IO, EXIT_OK, EXIT_VALIDATION};
use entseg_testkit::files::{duplicated_fixture, gt_as_prediction};
use entseg_testkit::gen::random_instance;
use entseg_testkit::panoptic::write_panoptic_fixture;
use serde_json::Value;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn entseg(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(
        std::iter::once("entseg").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_instance(dir: &Path, seed: u64, images: usize) -> (PathBuf, PathBuf) {
    let inst = random_instance(seed, images, 12, 12, 5);
    let gt = dir.join(format!("gt{seed}.json"));
    let pred = dir.join(format!("pred{seed}.json"));
    inst.gt.save(&gt).unwrap();
    PredictionFile::from_scored(&inst.overlapping).save(&pred).unwrap();
    (gt, pred)
}

#[test]
fn convert_reports_counts_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_panoptic_fixture(dir.path(), 1, 3);
    let out = dir.path().join("ds.json");
    let o = entseg(&[
        "convert",
        "--panoptic-json",
        s(&fx.json_path),
        "--png-dir",
        s(&fx.png_dir),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let ds = EntityDataset::load(&out).unwrap();
    assert_eq!(ds.len(), 3);
    let entities: usize = fx.images.iter().map(|im| im.segment_count()).sum();
    assert!(o.stdout.contains(&format!("3 images, {entities} entities")));
    assert!(ds.images.iter().all(|im| im.source_dataset == "panoptic"));

    let victim = fx.png_dir.join(format!("{:012}.png", fx.images[1].id));
    std::fs::remove_file(&victim).unwrap();
    let o = entseg(&[
        "convert",
        "--panoptic-json",
        s(&fx.json_path),
        "--png-dir",
        s(&fx.png_dir),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.code, EXIT_IO);
    assert!(o.stderr.contains(&fx.images[1].id.to_string()), "{}", o.stderr);

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"images":[],"annotations":[],"categories":[]}"#).unwrap();
    let o = entseg(&[
        "convert",
        "--panoptic-json",
        s(&empty),
        "--png-dir",
        s(dir.path()),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.code, EXIT_OK);
    assert!(EntityDataset::load(&out).unwrap().is_empty());
}

#[test]
fn eval_enforces_the_overlap_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, dup) = duplicated_fixture();
    let gt = dir.path().join("gt.json");
    let pred = dir.path().join("pred.json");
    ds.save(&gt).unwrap();
    dup.save(&pred).unwrap();

    let o = entseg(&["eval", "--pred", s(&pred), "--gt", s(&gt), "--metric", "entity"]);
    assert_eq!(o.code, EXIT_VALIDATION);
    assert!(o.stderr.contains("image 1"), "{}", o.stderr);

    let rep = dir.path().join("tol.json");
    let o = entseg(&[
        "eval",
        "--pred",
        s(&pred),
        "--gt",
        s(&gt),
        "--metric",
        "tolerant",
        "--out",
        s(&rep),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let ap = report(&rep)["result"]["ap"].as_f64().unwrap();
    assert!(ap.is_finite() && ap < 1.0);

    let resolved = dir.path().join("resolved");
    assert_eq!(
        entseg(&["resolve", "--pred", s(&pred), "--out", s(&resolved)]).code,
        EXIT_OK
    );
    let rep = dir.path().join("ent.json");
    let o = entseg(&[
        "eval",
        "--pred",
        s(&resolved),
        "--gt",
        s(&gt),
        "--metric",
        "entity",
        "--out",
        s(&rep),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert_eq!(report(&rep)["result"]["ap"].as_f64(), Some(1.0));
}

#[test]
fn gt_as_prediction_scores_one_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let inst = random_instance(5, 6, 12, 12, 5);
    let gt = dir.path().join("gt.json");
    let pred = dir.path().join("pred.json");
    inst.gt.save(&gt).unwrap();
    gt_as_prediction(&inst.gt).save(&pred).unwrap();
    for metric in ["entity", "tolerant", "box"] {
        let rep = dir.path().join(format!("{metric}.json"));
        let o = entseg(&[
            "eval",
            "--pred",
            s(&pred),
            "--gt",
            s(&gt),
            "--metric",
            metric,
            "--out",
            s(&rep),
        ]);
        assert_eq!(o.code, EXIT_OK, "{metric}: {}", o.stderr);
        let r = report(&rep);
        for key in ["ap", "ap50", "ap75"] {
            assert_eq!(r["result"][key].as_f64(), Some(1.0), "{metric} {key}");
        }
    }
    let rep = dir.path().join("pq.json");
    assert_eq!(
        entseg(&[
            "eval",
            "--pred",
            s(&pred),
            "--gt",
            s(&gt),
            "--metric",
            "pq",
            "--out",
            s(&rep)
        ])
        .code,
        0
    );
    let r = report(&rep);
    assert_eq!(r["result"]["pq"].as_f64(), Some(1.0));
    assert!(r["config"].get("eval").is_none());
}

#[test]
fn reports_embed_config_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = write_instance(dir.path(), 3, 5);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let args = |out: &Path, threads: &str| {
        entseg(&[
            "eval",
            "--pred",
            s(&pred),
            "--gt",
            s(&gt),
            "--metric",
            "tolerant",
            "--iou-thresholds",
            "0.5,0.75",
            "--max-dets",
            "3",
            "--threads",
            threads,
            "--out",
            s(out),
        ])
    };
    assert_eq!(args(&a, "1").code, EXIT_OK);
    assert_eq!(args(&b, "3").code, EXIT_OK);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let r = report(&a);
    assert_eq!(r["version"], entseg::VERSION);
    assert_eq!(r["config"]["eval"]["max_dets_per_image"], 3);
    assert_eq!(r["config"]["eval"]["iou_thresholds"], serde_json::json!([0.5, 0.75]));
    assert_eq!(r["config"]["eval"]["recall_points"], 101);
    let hash = entseg_cli::report::config_hash(&r["config"]).unwrap();
    assert_eq!(r["config_hash"].as_str(), Some(hash.as_str()));
    assert_eq!(hash.len(), 64);
}

#[test]
fn box_mode_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = write_instance(dir.path(), 4, 4);
    let labelled = dir.path().join("labelled.json");
    gt_as_prediction(&EntityDataset::load(&gt).unwrap())
        .save(&labelled)
        .unwrap();
    for mode in ["category-agnostic", "category-oriented", "oriented"] {
        let o = entseg(&[
            "eval",
            "--pred",
            s(&labelled),
            "--gt",
            s(&gt),
            "--metric",
            "box",
            "--mode",
            mode,
        ]);
        assert_eq!(o.code, EXIT_OK, "{mode}: {}", o.stderr);
        assert!(o.stdout.contains("AP        1.0000"), "{}", o.stdout);
    }
    // unlabelled boxes cannot be evaluated per category
    let o = entseg(&[
        "eval",
        "--pred",
        s(&pred),
        "--gt",
        s(&gt),
        "--metric",
        "box",
        "--mode",
        "oriented",
    ]);
    assert_ne!(o.code, EXIT_OK);
    let bad: [&[&str]; 6] = [
        &["--metric", "entity", "--mode", "oriented"],
        &["--metric", "tolerant", "--iou-thresholds", "0.7,0.5"],
        &["--metric", "tolerant", "--max-dets", "0"],
        &["--metric", "tolerant", "--threads", "0"],
        &["--metric", "pq", "--max-dets", "4"],
        &["--metric", "tolerant", "--unknown-flag"],
    ];
    for extra in bad {
        let mut args = vec!["eval", "--pred", s(&pred), "--gt", s(&gt)];
        args.extend_from_slice(extra);
        assert_eq!(entseg(&args).code, EXIT_IO, "{extra:?}");
    }
    let o = entseg(&[
        "eval",
        "--pred",
        s(&dir.path().join("nope.json")),
        "--gt",
        s(&gt),
        "--metric",
        "entity",
    ]);
    assert_eq!(o.code, EXIT_IO);
}

#[test]
fn resolve_is_idempotent_and_aggregates_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (_, pred) = write_instance(dir.path(), 6, 6);
    let first = dir.path().join("r1");
    let second = dir.path().join("r2");
    assert_eq!(
        entseg(&["resolve", "--pred", s(&pred), "--out", s(&first)]).code,
        EXIT_OK
    );
    for p in load_resolved(&first).unwrap().values() {
        validate_prediction(p).unwrap();
    }
    assert_eq!(
        entseg(&["resolve", "--pred", s(&first), "--out", s(&second)]).code,
        EXIT_OK
    );
    let mut names: Vec<_> = std::fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 1);
    for name in names {
        assert_eq!(
            std::fs::read(first.join(&name)).unwrap(),
            std::fs::read(second.join(&name)).unwrap(),
            "{name:?}"
        );
    }

    // entityness / centerness pairs become square-root scores
    let (_, mut file) = duplicated_fixture();
    let pairs = [(0.81, 0.49), (0.25, 0.64), (1.0, 0.36)];
    for (e, (en, ce)) in file.images[0].entities.iter_mut().zip(pairs) {
        e.score = None;
        e.entityness = Some(en);
        e.centerness = Some(ce);
    }
    let src = dir.path().join("pairs.json");
    file.save(&src).unwrap();
    let out = dir.path().join("r3");
    assert_eq!(
        entseg(&["resolve", "--pred", s(&src), "--out", s(&out), "--no-nms"]).code,
        EXIT_OK
    );
    let resolved = &load_resolved(&out).unwrap()[&1];
    // entity 2 (0.4) duplicates entity 1 (0.63) and loses every pixel
    assert_eq!(resolved.scores.len(), 3);
    assert!((resolved.scores[&1] - 0.63).abs() < 1e-12);
    assert!((resolved.scores[&3] - 0.6).abs() < 1e-12);
}

#[test]
fn nms_removes_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let (_, file) = duplicated_fixture();
    let src = dir.path().join("dup.json");
    file.save(&src).unwrap();
    let out = dir.path().join("r");
    let o = entseg(&["resolve", "--pred", s(&src), "--out", s(&out)]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("3 entities in, 2 out"), "{}", o.stdout);
    let bad = entseg(&["resolve", "--pred", s(&src), "--out", s(&out), "--nms-iou", "1.5"]);
    assert_eq!(bad.code, EXIT_IO);
}

#[test]
fn merge_and_presample() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    random_instance(1, 2, 8, 8, 3).gt.save(&a).unwrap();
    random_instance(2, 3, 8, 8, 3).gt.save(&b).unwrap();
    let m = dir.path().join("m.json");
    assert_eq!(entseg(&["merge", "--in", s(&a), s(&b), "--out", s(&m)]).code, EXIT_OK);
    let merged = EntityDataset::load(&m).unwrap();
    assert_eq!(merged.len(), 5);
    assert_eq!(entseg(&["merge", "--out", s(&m)]).code, EXIT_IO);

    let p1 = dir.path().join("p1.json");
    let p2 = dir.path().join("p2.json");
    assert_eq!(
        entseg(&["presample", "--in", s(&m), "--n", "5", "--seed", "9", "--out", s(&p1)]).code,
        EXIT_OK
    );
    assert_eq!(origins(&EntityDataset::load(&p1).unwrap()), origins(&merged));
    assert_eq!(
        entseg(&["presample", "--in", s(&m), "--n", "5", "--seed", "9", "--out", s(&p2)]).code,
        EXIT_OK
    );
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(
        entseg(&["presample", "--in", s(&m), "--n", "0", "--out", s(&p2)]).code,
        EXIT_IO
    );
}

#[test]
fn bench_is_thread_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    for threads in ["1", "4", "4"] {
        let out = dir.path().join(format!("bench{threads}.json"));
        let o = entseg(&[
            "bench",
            "--images",
            "100",
            "--height",
            "48",
            "--width",
            "64",
            "--seed",
            "3",
            "--threads",
            threads,
            "--out",
            s(&out),
        ]);
        assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
        let r = report(&out);
        assert_eq!(r["result"]["threads"].as_u64(), Some(threads.parse().unwrap()));
        results.push((r["result"]["summary"].clone(), r["config_hash"].clone()));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[1], results[2]);
    assert_eq!(entseg(&["bench", "--images", "0"]).code, EXIT_IO);
}

#[test]
fn losscheck_passes_and_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("loss.json");
    let o = entseg(&["losscheck", "--seed", "1", "--fixtures", "10", "--out", s(&rep)]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("1 1 1 0.25 0.25 0.25 0.25"));
    assert_eq!(report(&rep)["result"].as_array().unwrap().len(), 5);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "dice_eps = -1.0\n").unwrap();
    assert_eq!(entseg(&["losscheck", "--config", s(&cfg)]).code, EXIT_IO);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_entseg");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["--version"]), Some(EXIT_OK));
    assert_eq!(status(&["frobnicate"]), Some(EXIT_IO));
    assert_eq!(status(&["bench", "--images", "0"]), Some(EXIT_IO));
    let dir = tempfile::tempdir().unwrap();
    let (ds, dup) = duplicated_fixture();
    let gt = dir.path().join("gt.json");
    let pred = dir.path().join("pred.json");
    ds.save(&gt).unwrap();
    dup.save(&pred).unwrap();
    assert_eq!(
        status(&["eval", "--pred", s(&pred), "--gt", s(&gt), "--metric", "entity"]),
        Some(EXIT_VALIDATION)
    );
    assert_eq!(
        status(&["eval", "--pred", s(&pred), "--gt", s(&gt), "--metric", "tolerant"]),
        Some(EXIT_OK)
    );
}
