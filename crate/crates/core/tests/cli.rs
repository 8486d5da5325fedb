use std::path::Path;
use std::process::{Command, Output};

use lfdepth::io::read_pfm;
use lfdepth::synth::presets;

fn lfdepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfdepth"))
        .args(["--threads", "1"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = lfdepth(&["depth", "--input", s(&missing), "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[edges]\nbank_size = 4\n").unwrap();
    let out = lfdepth(&["depth", "--input", s(dir.path()), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_depth_eval_and_epi_dump() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scene.toml");
    std::fs::write(&spec, toml::to_string(&presets::two_plane(48, 5, 0.2, 1.0)).unwrap()).unwrap();
    let field = dir.path().join("field");
    let out = lfdepth(&["synth", "--spec", s(&spec), "--seed", "2", "--out", s(&field)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(field.join("input_Cam024.png").is_file());

    let depth = dir.path().join("depth");
    let out = lfdepth(&["depth", "--input", s(&field), "--out", s(&depth), "--dump-confidence"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["disparity.pfm", "preview.png", "diag.json"] {
        assert!(depth.join(f).is_file(), "{f} missing");
    }
    let pred = read_pfm(&depth.join("disparity.pfm")).unwrap();
    assert_eq!((pred.width(), pred.height()), (48, 48));
    let diag: serde_json::Value = serde_json::from_slice(&std::fs::read(depth.join("diag.json")).unwrap()).unwrap();
    assert_eq!(diag["schema_version"], 1);
    assert!(diag["sparse_points"].as_u64().unwrap() > 0);

    let metrics = dir.path().join("metrics");
    let out = lfdepth(&[
        "eval",
        "--pred",
        s(&depth.join("disparity.pfm")),
        "--gt",
        s(&field.join("gt.pfm")),
        "--out",
        s(&metrics),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["mse_x100"].as_f64().unwrap() < 5.0);
    assert!(metrics.join("error.png").is_file());

    let epis = dir.path().join("epis");
    let out = lfdepth(&["epi-dump", "--input", s(&field), "--rows", "10,20", "--out", s(&epis)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(epis.join("lines.csv")).unwrap();
    assert!(csv.starts_with("axis,slice,x_top,x_bottom,disparity,visible,strength"));
    assert!(csv.lines().count() > 2);
}
