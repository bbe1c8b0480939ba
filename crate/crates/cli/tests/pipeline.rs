use std::fs;
use std::path::{Path, PathBuf};

use optauction::reduced::{ReducedSolution, Region};
use optauction_cli::artifacts::{read_artifact, verify_manifest, Artifact, MANIFEST};
use optauction_cli::config::RunConfig;
use optauction_cli::pipeline::{run_pipeline, MyersonReport, PipelineSummary, ReduceReport, EXIT_ERROR, EXIT_OK};
use optauction_cli::plot::emit_plot_data;
use optauction::dual::DualCertificate;
use serde_json::Value;

fn config(name: &str) -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

fn payload<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> T {
    read_artifact::<T>(&dir.join(name)).unwrap().payload
}

fn read_csv(path: &PathBuf) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn one_item_one_bidder_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_pipeline(&config("uniform_1x1.json"), tmp.path()).unwrap();
    assert_eq!(out.summary.exit_code(), EXIT_OK, "{:?}", out.summary.checks);
    let my: MyersonReport = payload(tmp.path(), "myerson.json");
    assert!((my.revenue - 0.25).abs() <= 2e-3 && (my.x0 - 0.5).abs() < 1e-9);
    assert!(my.gap.abs() <= 1e-4);
    let cert: DualCertificate = payload(tmp.path(), "certificate.json");
    assert!(cert.valid && cert.gap_vs_primal.abs() <= 1e-4);
    let s = &out.summary;
    assert!((s.simulated_revenue.unwrap() - 0.25).abs() <= 2e-3);
    // The grid optimum sits slightly above the continuum value.
    let primal = s.primal_value.unwrap();
    assert!(primal >= 0.25 - 2e-3 && primal <= 0.25 + 5e-3);
    assert!(verify_manifest(tmp.path()).unwrap().is_empty());
    let listed = fs::read_to_string(tmp.path().join(MANIFEST)).unwrap().lines().count();
    assert_eq!(listed + 1, fs::read_dir(tmp.path()).unwrap().count());

    let heat = read_csv(&emit_plot_data(tmp.path(), "u_heatmap").unwrap());
    assert_eq!(heat[0], ["x1", "u"]);
    assert_eq!(heat.len(), 102);
    let curves = read_csv(&emit_plot_data(tmp.path(), "stoploss_curves").unwrap());
    for row in curves.iter().skip(1).filter(|r| r[1] == "bound") {
        let a: f64 = row[0].parse().unwrap();
        assert!((row[2].parse::<f64>().unwrap() - (1.0 - a)).abs() < 1e-12);
    }
}

#[test]
fn two_bidder_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_pipeline(&config("uniform_1x2.json"), tmp.path()).unwrap();
    assert_eq!(out.summary.exit_code(), EXIT_OK, "{:?}", out.summary.checks);
    assert!((out.summary.primal_value.unwrap() - 5.0 / 12.0).abs() < 5e-3);
    assert!(!tmp.path().join("weak.json").exists());
    let curves = read_csv(&emit_plot_data(tmp.path(), "stoploss_curves").unwrap());
    assert_eq!(curves[0], ["alpha", "curve", "value"]);
    let bound: Vec<_> = curves.iter().skip(1).filter(|r| r[1] == "bound").collect();
    assert_eq!(bound.len(), 201);
    for row in bound {
        let a: f64 = row[0].parse().unwrap();
        assert!((row[2].parse::<f64>().unwrap() - (0.5 - a + a * a / 2.0)).abs() < 1e-12);
    }
}

#[test]
fn two_item_bundle_recovers_prices_and_regions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("uniform_2x1.json");
    let out = run_pipeline(&cfg, tmp.path()).unwrap();
    assert_eq!(out.summary.exit_code(), EXIT_OK, "{:?}", out.summary.checks);
    let h = 1.0 / (cfg.problem.k - 1) as f64;
    let report: ReduceReport = payload(tmp.path(), "reduce.json");
    let regions = report.regions.unwrap();
    for p in regions.item_prices {
        assert!((p.unwrap() - 2.0 / 3.0).abs() <= 3.0 * h);
    }
    assert!((regions.bundle_price.unwrap() - (4.0 - 2f64.sqrt()) / 3.0).abs() <= 3.0 * h);

    let rows = read_csv(&emit_plot_data(tmp.path(), "region_map").unwrap());
    assert_eq!(rows[0], ["index", "x1", "x2", "region", "class"]);
    let q = (4.0 - 2f64.sqrt()) / 3.0;
    let mut agree = 0;
    for r in &rows[1..] {
        let (x, y): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        let opts = [("Z", 0.0), ("A", x - 2.0 / 3.0), ("B", y - 2.0 / 3.0), ("W", x + y - q)];
        let best = opts.iter().fold(opts[0], |b, o| if o.1 > b.1 { *o } else { b });
        agree += (best.0 == r[3]) as usize;
    }
    assert!(agree as f64 >= 0.9 * (rows.len() - 1) as f64);
    let letters: std::collections::BTreeSet<_> = rows[1..].iter().map(|r| r[3].clone()).collect();
    assert_eq!(letters.len(), 4);

    let arrows = read_csv(&emit_plot_data(tmp.path(), "plan_arrows").unwrap());
    assert_eq!(arrows[0], ["from1", "from2", "to1", "to2", "mass"]);
    assert!(arrows.len() > 1);
    let sol: ReducedSolution = payload(tmp.path(), "solution.json");
    assert_eq!(Region::from_allocation(&[1.0, 1.0]), Region::W);
    assert_eq!(sol.problem.k, cfg.problem.k);
}

#[test]
fn zero_utility_heatmap_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(&config("uniform_1x1.json"), tmp.path()).unwrap();
    let path = tmp.path().join("solution.json");
    let mut art: Artifact<Value> = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let u = art.payload["utility"]["u"].as_array_mut().unwrap();
    u.iter_mut().for_each(|v| *v = Value::from(0.0));
    fs::write(&path, serde_json::to_string(&art).unwrap()).unwrap();
    let rows = read_csv(&emit_plot_data(tmp.path(), "u_heatmap").unwrap());
    assert!(rows[1..].iter().all(|r| r[1].parse::<f64>().unwrap() == 0.0));
    assert_eq!(verify_manifest(tmp.path()).unwrap(), ["solution.json"]);
}

#[test]
fn unknown_plot_kind_lists_the_choices() {
    let err = emit_plot_data(Path::new("."), "contour").unwrap_err().to_string();
    for kind in ["u_heatmap", "region_map", "plan_arrows", "stoploss_curves"] {
        assert!(err.contains(kind), "{err}");
    }
}

#[test]
fn failed_stage_keeps_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config("uniform_2x1.json");
    cfg.problem.k = 300;
    cfg.problem.m = 4;
    let out = run_pipeline(&cfg, tmp.path()).unwrap();
    let s: PipelineSummary = payload(tmp.path(), "summary.json");
    assert_eq!(s, out.summary);
    assert_eq!(s.failed_stage.as_deref(), Some("reduce"));
    assert_eq!(s.exit_code(), EXIT_ERROR);
    assert!(tmp.path().join("config.json").exists());
    let manifest = fs::read_to_string(tmp.path().join(MANIFEST)).unwrap();
    assert!(manifest.lines().any(|l| l.starts_with("# failed stage: reduce")), "{manifest}");
    assert!(verify_manifest(tmp.path()).unwrap().is_empty());
}
