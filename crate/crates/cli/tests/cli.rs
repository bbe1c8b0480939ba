use std::path::Path;
use std::process::{Command, Output};

use optauction_cli::artifacts::verify_manifest;
use serde_json::Value;

fn run(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optauction")).args(args).env("OPTAUCTION_OUT", out_root).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn myerson_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let v = stdout_json(&run(&["myerson", "--m", "2", "--k", "21"], tmp.path()));
    assert!((v["revenue"].as_f64().unwrap() - 5.0 / 12.0).abs() < 1e-9);
    assert!((v["x0"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let dir = tmp.path().join("myerson");
    let csv = std::fs::read_to_string(dir.join("myerson.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,u,vbar"));
    assert_eq!(csv.lines().count(), 22);
    assert!(verify_manifest(&dir).unwrap().is_empty());
}

#[test]
fn stagewise_subcommands_share_a_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let d = dir.to_str().unwrap();
    let v = stdout_json(&run(&["reduce", "--n", "2", "--m", "1", "--k", "7", "--out", d], tmp.path()));
    let value = v["value"].as_f64().unwrap();
    assert!(value > 0.5 && value < 0.8);
    assert!(v["regions"]["counts"].is_object());

    let o = run(&["dual", "--mode", "certify", "--input", d], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("valid true"));
    let w = stdout_json(&run(&["dual", "--mode", "weak", "--input", d], tmp.path()));
    assert!(w["value"].as_f64().unwrap() <= value + 1e-9);
    let b = stdout_json(&run(&["dual", "--mode", "beckmann", "--input", d], tmp.path()));
    let (bv, lv) = (b["beckmann"].as_f64().unwrap(), b["legendre"].as_f64().unwrap());
    assert!((bv - lv).abs() < 1e-6, "{bv} vs {lv}");
    assert!(bv <= b["certificate_part"].as_f64().unwrap() + 1e-9);

    for f in ["solution.json", "certificate.json", "weak.json", "plan.csv", "beckmann.json", "MANIFEST"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(verify_manifest(&dir).unwrap().is_empty());
    let o = run(&["plotdata", "--input", d, "--kind", "plan_arrows"], tmp.path());
    assert!(o.status.success());
    let o = run(&["plotdata", "--input", d, "--kind", "nope"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stoploss_curves"));
}

#[test]
fn pipeline_then_resimulate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.json");
    std::fs::write(
        &cfg,
        r#"{"problem": {"n": 1, "m": 2, "rho": {"kind": "uniform", "dim": 1}, "k": 41},
            "simulation": {"samples": 20000, "ic_probe_k": 5, "ic_opponents": 200, "expost_samples": 5000, "consistency_bins": 5},
            "seed": 5}"#,
    )
    .unwrap();
    let o = run(&["pipeline", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let dir = tmp.path().join("small");
    assert!(dir.join("summary.json").exists());

    let mech = dir.join("mechanism.json");
    let other = tmp.path().join("sim");
    let args = ["simulate", "--mech", mech.to_str().unwrap(), "--samples", "5000", "--seed", "9", "--out", other.to_str().unwrap()];
    let v = stdout_json(&run(&args, tmp.path()));
    assert_eq!(v["revenue"]["samples"], 5000);
    assert_eq!(v["revenue"]["seed"], 9);
    assert_eq!(v["ic_ir"]["expost_ir_violations"], 0);
    assert!(verify_manifest(&other).unwrap().is_empty());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["myerson", "--n", "2"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["pipeline", "--config", "/nonexistent.json"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["reduce", "--n", "2", "--rho", "uniform", "--k", "1"], tmp.path()).status.code(), Some(1));
}
