//! End-to-end tests of the `stride` binary: exit codes, determinism, and a
//! full gen-data -> train -> eval -> rollout -> plot pipeline on a tiny
//! configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stride"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawning the stride binary")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed (exit {:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn demo_scene() -> PathBuf {
    // crates/cli -> repository root.
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes/demo.json")
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["render", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage") || err.contains("--help"), "{err}");
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out_pgm = dir.path().join("x.pgm");
    let out = run(&[
        "render",
        "--scene",
        "/nonexistent/scene.json",
        "--pose",
        "0,0,0",
        "--out",
        out_pgm.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn malformed_pose_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_pgm = dir.path().join("x.pgm");
    let out = run(&[
        "render",
        "--scene",
        demo_scene().to_str().unwrap(),
        "--pose",
        "zero,zero,zero",
        "--out",
        out_pgm.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_demo_scene_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    let scene = demo_scene();
    let scene = scene.to_str().unwrap();
    let out = run(&["render", "--scene", scene, "--pose", "0,0,0", "--out", a.to_str().unwrap()]);
    assert_success(&out, "first render");
    let out = run(&["render", "--scene", scene, "--pose", "0,0,0", "--out", b.to_str().unwrap()]);
    assert_success(&out, "second render");
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, bytes_b, "renders differ between runs");
    assert!(bytes_a.starts_with(b"P5\n"), "not a binary PGM");
}

/// gen-data -> train -> eval -> rollout -> plot, all through the binary,
/// with a deliberately tiny network so the whole pipeline stays fast.
#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("ckpt.json");
    let metrics = dir.path().join("metrics.json");
    let log = dir.path().join("roll.jsonl");
    let svg = dir.path().join("roll.svg");
    let config = dir.path().join("tiny.toml");
    std::fs::write(
        &config,
        "epochs = 2\nseed = 3\naugment = false\n\n[net]\npool_rows = 2\npool_cols = 4\n\
         waypoints = 3\nsteps = 2\npath_hidden = [8, 8]\nstep_hidden = [6, 6]\n\n\
         [unicycle]\nn = 3\n",
    )
    .unwrap();

    let out = run(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--kinds",
        "corridor,clutter",
        "--variants",
        "0",
        "--samples",
        "2",
        "--seed",
        "7",
    ]);
    assert_success(&out, "gen-data");
    assert!(data.join("corridor-v0/scene.json").is_file());
    assert!(data.join("corridor-v0/sample-000.pgm").is_file());
    assert!(data.join("clutter-v0/sample-001.json").is_file());

    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert_success(&out, "train");
    assert!(ckpt.is_file());

    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--json",
        metrics.to_str().unwrap(),
    ]);
    assert_success(&out, "eval");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    let per_scene = report["per_scene"].as_object().expect("per_scene object");
    assert_eq!(per_scene.len(), 2);
    for (label, m) in per_scene {
        for key in ["feasibility", "collision_risk", "evenness"] {
            let v = m[key].as_f64().unwrap_or_else(|| panic!("{label} missing {key}"));
            assert!(v.is_finite() && v >= 0.0, "{label}.{key} = {v}");
        }
    }
    assert!(report["aggregate"]["feasibility"].is_f64());

    let out = run(&[
        "rollout",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--scene",
        data.join("corridor-v0/scene.json").to_str().unwrap(),
        "--goal",
        "1.5,0",
        "--log",
        log.to_str().unwrap(),
        "--max-time",
        "3",
    ]);
    assert_success(&out, "rollout");
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.lines().count() >= 3, "log too short:\n{log_text}");
    assert!(log_text.contains("\"outcome\""));

    let out = run(&[
        "plot",
        "--log",
        log.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert_success(&out, "plot");
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg "));
    assert!(svg_text.trim_end().ends_with("</svg>"));
    assert!(svg_text.contains("<polyline"));
}

#[test]
fn rollout_log_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("ckpt.json");
    let config = dir.path().join("tiny.toml");
    std::fs::write(
        &config,
        "epochs = 1\nseed = 5\naugment = false\n\n[net]\npool_rows = 2\npool_cols = 4\n\
         waypoints = 3\nsteps = 2\npath_hidden = [8, 8]\nstep_hidden = [6, 6]\n\n\
         [unicycle]\nn = 3\n",
    )
    .unwrap();
    let out = run(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--kinds",
        "corridor",
        "--variants",
        "0",
        "--samples",
        "1",
        "--seed",
        "9",
    ]);
    assert_success(&out, "gen-data");
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert_success(&out, "train");

    let scene = data.join("corridor-v0/scene.json");
    let mut logs = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let log = dir.path().join(name);
        let out = run(&[
            "rollout",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--scene",
            scene.to_str().unwrap(),
            "--goal",
            "2,0",
            "--log",
            log.to_str().unwrap(),
            "--max-time",
            "2",
        ]);
        assert_success(&out, "rollout");
        logs.push(std::fs::read(&log).unwrap());
    }
    assert_eq!(logs[0], logs[1], "rollout logs differ between runs");
}
