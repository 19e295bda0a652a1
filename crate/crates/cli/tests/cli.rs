use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sosfri::ultrasound::{phantom_scatterers, synthesize_channel, DepthConvention, RecordParams};

fn sosfri(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_sosfri"))
        .args(args)
        .current_dir(dir)
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "sosfri {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn design_sample_recover_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("stream.json"),
        r#"{"shape": {"type": "dirac"}, "tau": 1.0, "kind": "finite",
            "delays": [0.12, 0.47, 0.81], "amplitudes": [1.0, -0.5, 0.7]}"#,
    )
    .unwrap();
    sosfri(d, &["design-kernel", "--type", "dirichlet", "--p", "3", "--extend", "0", "--out", "kernel.json"]);
    let kernel = read_json(&d.join("kernel.json"));
    assert_eq!(kernel["coefficients"].as_array().unwrap().len(), 7);
    assert_eq!(kernel["r"], 1);

    sosfri(d, &["sample", "--stream", "stream.json", "--kernel", "kernel.json", "--N", "7", "--out", "c.csv"]);
    let csv = std::fs::read_to_string(d.join("c.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(d.join("c.json").exists());

    sosfri(d, &["recover", "--samples", "c.csv", "--L", "3", "--out", "r.json"]);
    let delays = floats(&read_json(&d.join("r.json"))["delays"]);
    for (a, b) in delays.iter().zip([0.12, 0.47, 0.81]) {
        assert!((a - b).abs() < 1e-9, "{delays:?}");
    }
}

#[test]
fn optimal_kernel_document() {
    let dir = tempfile::tempdir().unwrap();
    sosfri(
        dir.path(),
        &["design-kernel", "--type", "optimal", "--p", "4", "--sigma", "0.01", "--L", "2", "--noise-var", "0.5", "--out", "opt.json"],
    );
    let doc = read_json(&dir.path().join("opt.json"));
    let energy: f64 = doc["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["re"].as_f64().unwrap().powi(2) + c["im"].as_f64().unwrap().powi(2))
        .sum();
    assert!(energy > 0.0);
}

#[test]
fn experiment_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("spec.json"),
        r#"{"scenario": "periodic_noisy", "pulses": 2, "snr_db": [10, 20], "trials": 20, "seed": 3}"#,
    )
    .unwrap();
    sosfri(d, &["experiment", "--spec", "spec.json", "--out", "out", "--compare", "dirichlet,hamming"]);
    for f in ["results.csv", "summary.json", "plot.dat", "kernel_comparison.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(d.join("out/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let summary = read_json(&d.join("out/summary.json"));
    assert_eq!(summary["spec"]["trials"], 20);
}

#[test]
fn bad_spec_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), r#"{"scenario": "periodic_noisy", "pulses": 0}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sosfri"))
        .args(["experiment", "--spec", "spec.json", "--out", "out"])
        .current_dir(dir.path())
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn ultrasound_synthesized_phantom() {
    let dir = tempfile::tempdir().unwrap();
    let out = sosfri(dir.path(), &["ultrasound", "--synthesize", "--seed", "2", "--out", "report.json"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("max localization error"));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["high_rate_samples"], 4160);
    assert_eq!(report["low_rate_samples"], 17);
    assert!(report["max_error_m"].as_f64().unwrap() <= 0.5e-3);
    assert_eq!(report["estimates"].as_array().unwrap().len(), 4);
}

#[test]
fn ultrasound_recorded_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let params = RecordParams::default();
    let truth = phantom_scatterers(params.c_sound, DepthConvention::TwoWay);
    let record = synthesize_channel(&truth, &params, 30.0, 4).unwrap();
    let body: Vec<String> = record.samples.iter().map(|v| v.to_string()).collect();
    std::fs::write(d.join("rf.csv"), body.join("\n")).unwrap();
    std::fs::write(
        d.join("rf.json"),
        format!(r#"{{"f_s": {}, "f_c": {}, "units": "V"}}"#, params.fs, params.fc),
    )
    .unwrap();
    sosfri(d, &["ultrasound", "--input", "rf.csv", "--N", "33", "--threshold-fraction", "0", "--out", "report.json"]);
    let report = read_json(&d.join("report.json"));
    assert_eq!(report["low_rate_samples"], 33);
    let mut depths: Vec<f64> = report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["depth_m"].as_f64().unwrap())
        .collect();
    depths.sort_by(f64::total_cmp);
    for (d, s) in depths.iter().zip(&truth) {
        let depth = params.c_sound * s.delay / 2.0;
        assert!((d - depth).abs() <= 0.5e-3, "{d} vs {depth}");
    }
}
