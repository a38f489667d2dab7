use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};
use sse_core::training::{TrainConfig, FINAL_CHECKPOINT};

fn sse(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_sse")).args(args).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success(), "sse {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dataset_train_edit_eval_panorama() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    sse(&["dataset", "gen", "--out", s(&data), "--count", "6", "--resolution", "32"]);
    assert!(data.join("manifest.json").is_file() && data.join("scenes/00005/image.png").is_file());

    let config = TrainConfig { scenes: 6, max_steps: Some(2), ..TrainConfig::smoke(7) };
    let config_path = dir.path().join("train.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let run = dir.path().join("run");
    sse(&["train", "--config", s(&config_path), "--data", s(&data), "--out", s(&run)]);
    let ckpt = run.join(FINAL_CHECKPOINT);
    assert!(ckpt.is_file());
    assert_eq!(std::fs::read_to_string(run.join("train.jsonl")).unwrap().lines().count(), 2);

    let req = dir.path().join("req.json");
    std::fs::write(&req, json!({"scene": {"id": 1}, "mask": {"generate": {"kind": "freeform"}}}).to_string()).unwrap();
    let png = dir.path().join("out.png");
    let out = sse(&["--seed", "3", "edit", "--checkpoint", s(&ckpt), "--data", s(&data), "--request", s(&req), "--png", s(&png)]);
    let result: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["seed"], 3);
    assert!(png.is_file());

    let report = dir.path().join("report.json");
    sse(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--kinds", "extension,outpainting", "--out", s(&report)]);
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert!(r["extension"]["fid"].is_number() && r["outpainting"]["miou"].is_number());

    let pano = dir.path().join("pano.png");
    sse(&["panorama", "--checkpoint", s(&ckpt), "--data", s(&data), "--scene", "0", "--steps", "4", "--fraction", "0.25", "--out", s(&pano)]);
    let decoded = sse_core::shapeworld::pngio::decode_rgb8(std::fs::File::open(&pano).unwrap()).unwrap();
    assert_eq!((decoded.width, decoded.height), (64, 32));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |seed: &str, out: &Path| {
        let st = Command::new(env!("CARGO_BIN_EXE_sse"))
            .args(["dataset", "gen", "--out", s(out), "--count", "2", "--resolution", "32"])
            .env("SSE_SEED", seed)
            .output()
            .unwrap();
        assert!(st.status.success());
        std::fs::read_to_string(out.join("manifest.json")).unwrap()
    };
    let (a, b) = (gen("1", &dir.path().join("a")), gen("2", &dir.path().join("b")));
    assert_ne!(a, b);
    assert_eq!(a, gen("1", &dir.path().join("c")));
}
