//! CLI contract tests: exit codes, machine-readable errors, deterministic
//! outputs, and the order-(r+1) residual drop in `trace`.

use std::path::Path;
use std::process::{Command, Output};

fn resnf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resnf")).args(args).output().unwrap()
}

fn write_config(dir: &Path, istar: f64, order: u32) -> std::path::PathBuf {
    let path = dir.join("run.json");
    let cfg = serde_json::json!({
        "model": {
            "kind": "standard",
            "n_sites": 7,
            "kappa": [1.0],
            "gamma": 1.0,
            "excited": [-2, -1, 1],
            "istar": [istar, istar, istar],
            "resonance": [1, 1, 1],
        },
        "normal_form": { "order": order },
    });
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn config_errors_exit_2() {
    let out = resnf(&["classify", "--preset", "no_such_model"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("error output is JSON");
    assert_eq!(err["exit_code"], 2);
    assert!(err["error"].as_str().unwrap().contains("no_such_model"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"model": {"kind": "standard"}, "unknown_key": 1}"#).unwrap();
    let out = resnf(&["normalize", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resonant_istar_fails_melnikov_with_exit_3() {
    // I* = 1 gives ω = 2, so the first Melnikov divisor |ω − 2| vanishes
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), 1.0, 2);
    let out = resnf(&["verify", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["exit_code"], 3);
}

#[test]
fn no_continued_candidates_exit_3() {
    // at order one the two-site candidate set is a single unresolved family
    let out = resnf(&["refine", "--preset", "two_site", "--order", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn normalize_output_is_deterministic() {
    let read = || {
        let dir = tempfile::tempdir().unwrap();
        let out = resnf(&["normalize", "--preset", "two_site", "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join("normalize.json")).unwrap()
    };
    assert_eq!(read(), read(), "normalize.json differs between runs");
}

#[test]
fn trace_residual_drops_by_an_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.6, 2);
    let out = resnf(&[
        "trace",
        "--config",
        cfg.to_str().unwrap(),
        "--candidate",
        "0,3.141592653589793",
        "--periods",
        "4",
        "--eps",
        "0.002",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace_summary.json")).unwrap())
            .unwrap();
    // the order-3 seed should track the refined orbit about an ε-factor
    // closer than the order-2 seed (ε = 2·10⁻³ clears the refinement floor)
    let ratio = summary["residual_ratio"].as_f64().unwrap();
    assert!(ratio < 0.1, "residual ratio {ratio}");
    for order in ["2", "3"] {
        let csv = dir.path().join(format!("trace_order{order}.csv"));
        assert!(csv.exists(), "missing {csv:?}");
    }
}
