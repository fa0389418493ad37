use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lane3d-kit")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = kit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scene(dir: &Path, frames: usize) -> String {
    let out = dir.join("scene");
    ok(&["gen-scene", "--frames", &frames.to_string(), "--out", s(&out)]);
    s(&out.join("gt.json")).to_string()
}

#[test]
fn default_config_is_valid_json_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["default-config"]);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["num_anchors"], 30);
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, &text).unwrap();
    let report: Value = serde_json::from_str(&ok(&["grad-check", "--config", s(&path), "--trials", "5"])).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn malformed_config_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"attn_dim\": \n}").unwrap();
    let out = kit(&["grad-check", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3 column 1"), "{err}");
}

#[test]
fn invalid_config_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"num_anchors": 0}"#).unwrap();
    assert_eq!(kit(&["init-weights", "--config", s(&path), "--out", "unused"]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_2() {
    let out = kit(&["evaluate", "--gt", "/nonexistent/gt.json", "--pred", "/nonexistent/p.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let gt = scene(dir.path(), 3);
    let report: Value = serde_json::from_str(&ok(&["evaluate", "--gt", &gt, "--pred", &gt])).unwrap();
    assert_eq!(report["f1"], 100.0);
    assert_eq!(report["ex_near"], 0.0);
    assert_eq!(report["num_frames"], 3);

    let plots = dir.path().join("plots");
    let once: Value =
        serde_json::from_str(&ok(&["evaluate", "--protocol", "once", "--gt", &gt, "--pred", &gt, "--plot", s(&plots)]))
            .unwrap();
    assert_eq!(once["f1"], 100.0);
    assert_eq!(once["cd_error"], 0.0);
    let svgs = std::fs::read_dir(&plots).unwrap().count();
    assert_eq!(svgs, 3);

    let loss: Value = serde_json::from_str(&ok(&["loss", "--gt", &gt, "--pred", &gt])).unwrap();
    assert_eq!(loss["total"], 0.0);
}

#[test]
fn tag_filter_keeps_only_tagged_frames() {
    let dir = tempfile::tempdir().unwrap();
    let gt = scene(dir.path(), 2);
    let mut file: Value = serde_json::from_str(&std::fs::read_to_string(&gt).unwrap()).unwrap();
    file["frames"][1]["tags"] = serde_json::json!(["night"]);
    std::fs::write(&gt, serde_json::to_string(&file).unwrap()).unwrap();
    let report: Value =
        serde_json::from_str(&ok(&["evaluate", "--gt", &gt, "--pred", &gt, "--tag-filter", "night"])).unwrap();
    assert_eq!(report["num_frames"], 1);
}

#[test]
fn anchors_and_forward_run_on_a_generated_scene() {
    let dir = tempfile::tempdir().unwrap();
    let gt = scene(dir.path(), 2);
    let weights = dir.path().join("w.a3t");
    ok(&["init-weights", "--seed", "1", "--out", s(&weights)]);

    let anchors = dir.path().join("anchors.json");
    let features = dir.path().join("scene/features/frame-000000.a3t");
    ok(&["anchors", "--features", s(&features), "--weights", s(&weights), "--out", s(&anchors)]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&anchors).unwrap()).unwrap();
    assert_eq!(v["metas"].as_array().unwrap().len(), 30);
    assert_eq!(v["anchors"][0]["points"].as_array().unwrap().len(), 20);

    let pred = dir.path().join("pred.json");
    let scene_dir = dir.path().join("scene");
    ok(&["forward", "--scene", s(&scene_dir), "--weights", s(&weights), "--out", s(&pred)]);
    let p: Value = serde_json::from_str(&std::fs::read_to_string(&pred).unwrap()).unwrap();
    assert_eq!(p["frames"].as_array().unwrap().len(), 2);
    assert_eq!(p["frames"][0]["lanes"].as_array().unwrap().len(), 30);
    // random weights still produce a well-formed report
    let report: Value = serde_json::from_str(&ok(&["evaluate", "--gt", &gt, "--pred", s(&pred)])).unwrap();
    assert!(report["f1"].as_f64().unwrap() >= 0.0);
}

#[test]
fn weights_for_another_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    scene(dir.path(), 1);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"feature_channels": 8}"#).unwrap();
    let weights = dir.path().join("w.a3t");
    ok(&["init-weights", "--config", s(&cfg), "--out", s(&weights)]);
    let scene_dir = dir.path().join("scene");
    let out = kit(&["forward", "--scene", s(&scene_dir), "--weights", s(&weights), "--out", "unused.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn truncated_tensor_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.a3t");
    ok(&["init-weights", "--out", s(&weights)]);
    let bytes = std::fs::read(&weights).unwrap();
    std::fs::write(&weights, &bytes[..bytes.len() / 2]).unwrap();
    scene(dir.path(), 1);
    let scene_dir = dir.path().join("scene");
    let out = kit(&["forward", "--scene", s(&scene_dir), "--weights", s(&weights), "--out", "unused.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_reports_a_positive_rate() {
    let v: Value = serde_json::from_str(&ok(&["bench", "--frames", "8"])).unwrap();
    assert_eq!(v["frames"], 8);
    assert!(v["frames_per_second"].as_f64().unwrap() > 0.0);
}
