use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vidchain(dir: &Path, args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidchain"))
        .args(args.split_whitespace())
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &str) -> String {
    let out = vidchain(dir, args);
    assert!(out.status.success(), "{args}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn prepared() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"synthetic": {"n_videos": 8}, "train": {"epochs": 2, "learning_rate": 0.5}}"#,
    )
    .unwrap();
    ok(dir, "gen-data --config cfg.json --seed 0 --out data");
    ok(dir, "pretrain-loc --data data --config cfg.json --out loc.ckpt");
    ok(dir, "finetune-ans --data data --sampling uniform --config cfg.json --out ans.ckpt");
    tmp
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_writes_manifests_and_sidecar() {
    let tmp = prepared();
    for name in ["qa.jsonl", "moment.jsonl", "truth.jsonl", "features.bin"] {
        assert!(tmp.path().join("data").join(name).is_file(), "{name}");
    }
    let qa = std::fs::read_to_string(tmp.path().join("data/qa.jsonl")).unwrap();
    assert_eq!(qa.lines().count(), 8);
}

#[test]
fn checkpoints_carry_metadata() {
    let tmp = prepared();
    let meta = read_json(&tmp.path().join("loc.ckpt.meta.json"));
    assert_eq!(meta["role"], "localizer");
    assert_eq!(meta["epoch"], 2);
    assert_eq!(meta["loss_history"].as_array().unwrap().len(), 2);
}

#[test]
fn eval_qa_report_has_rows_and_hash() {
    let tmp = prepared();
    let stdout = ok(
        tmp.path(),
        "eval-qa --data data --strategy localizer --localizer loc.ckpt --answerer ans.ckpt --n 8 --k 2 --seed 0 --out qa.json",
    );
    let report = read_json(&tmp.path().join("qa.json"));
    assert_eq!(report["task"], "qa");
    assert_eq!(report["per_example"].as_array().unwrap().len(), 8);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(stdout.contains("repro_hash: "));
}

#[test]
fn infer_writes_predictions_and_scores() {
    let tmp = prepared();
    ok(
        tmp.path(),
        "infer --data data --localizer loc.ckpt --answerer ans.ckpt --n 16 --k 4 --out pred.jsonl",
    );
    let preds = std::fs::read_to_string(tmp.path().join("pred.jsonl")).unwrap();
    let first: Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert_eq!(first["frame_indices_used"].as_array().unwrap().len(), 4);
    let scores = std::fs::read_to_string(tmp.path().join("pred.jsonl.scores.jsonl")).unwrap();
    let first: Value = serde_json::from_str(scores.lines().next().unwrap()).unwrap();
    assert_eq!(first["scores"].as_array().unwrap().len(), 16);
}

#[test]
fn eval_moment_reports_per_query_rows() {
    let tmp = prepared();
    ok(
        tmp.path(),
        "eval-moment --data data --localizer loc.ckpt --fps 0.5 --span-threshold 6 --out mr.json",
    );
    let report = read_json(&tmp.path().join("mr.json"));
    assert_eq!(report["task"], "moment");
    assert_eq!(report["per_query"].as_array().unwrap().len(), 8);
    assert!(report["mAP"].is_number());
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = prepared();
    let dir = tmp.path();
    let out = vidchain(
        dir,
        "eval-qa --data data --strategy uniform --answerer ans.ckpt --n 4 --k 8 --seed 0 --out x.json",
    );
    assert!(!out.status.success());
    assert!(!dir.join("x.json").exists());

    let out = vidchain(
        dir,
        "eval-qa --data data --strategy uniform --answerer loc.ckpt --n 8 --k 4 --seed 0 --out y.json",
    );
    assert!(!out.status.success(), "a localizer checkpoint is not an answerer");

    let out = vidchain(
        dir,
        "finetune-ans --data data --sampling localizer --config cfg.json --out z.ckpt",
    );
    assert!(!out.status.success(), "localizer sampling needs --localizer");

    let out = vidchain(dir, "eval-qa --data missing --strategy uniform --answerer ans.ckpt --n 8 --k 4 --seed 0 --out w.json");
    assert!(!out.status.success());
}
