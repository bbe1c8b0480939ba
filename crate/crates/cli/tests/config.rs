use std::fs;
use std::path::Path;

use optauction::density::DistributionSpec;
use optauction_cli::artifacts::{read_artifact, sha256_hex, verify_manifest, Bundle};
use optauction_cli::config::{parse_rho, RunConfig};

fn bundled() -> Vec<RunConfig> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    ["uniform_1x1.json", "uniform_2x1.json", "uniform_1x2.json"].iter().map(|n| RunConfig::load(&dir.join(n)).unwrap()).collect()
}

#[test]
fn configs_round_trip() {
    for cfg in bundled() {
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}

#[test]
fn configs_reject_unknown_and_inconsistent_fields() {
    let mut v = serde_json::to_value(&bundled()[0]).unwrap();
    v["problem"]["items"] = 2.into();
    assert!(serde_json::from_value::<RunConfig>(v).is_err());

    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = bundled()[1].clone();
    cfg.problem.n = 3;
    let path = tmp.path().join("bad.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert!(RunConfig::load(&path).is_err());
}

#[test]
fn minimal_config_takes_defaults() {
    let text = r#"{"problem": {"n": 1, "m": 2, "rho": {"kind": "uniform", "dim": 1}, "k": 11}, "seed": 3}"#;
    let cfg: RunConfig = serde_json::from_str(text).unwrap();
    assert_eq!(cfg.problem.alpha_points, 33);
    assert_eq!(cfg.simulation.samples, 200_000);
    assert!(cfg.output.csv);
}

#[test]
fn density_arguments() {
    assert_eq!(parse_rho("uniform", 2).unwrap(), DistributionSpec::uniform(2));
    let inline = r#"{"kind": "product", "factors": [{"kind": "piecewise_linear", "knots": [0, 1], "values": [0.5, 1.5]}]}"#;
    assert_eq!(parse_rho(inline, 1).unwrap().dim(), 1);
    assert!(parse_rho("/nonexistent/density.json", 1).is_err());
}

#[test]
fn artifacts_carry_config_hashes() {
    let cfg = bundled()[0].clone();
    let tmp = tempfile::tempdir().unwrap();
    let mut b = Bundle::create(tmp.path()).unwrap();
    b.write_json("x.json", "demo", &cfg, vec![1.0, 2.0]).unwrap();
    b.write_csv("t.csv", "a,b\n1,2\n").unwrap();
    b.note("hello".into());
    b.finish().unwrap();
    let art = read_artifact::<Vec<f64>>(&tmp.path().join("x.json")).unwrap();
    assert_eq!(art.payload, [1.0, 2.0]);
    assert_eq!(art.config_sha256, sha256_hex(serde_json::to_string(&cfg).unwrap().as_bytes()));
    assert!(verify_manifest(tmp.path()).unwrap().is_empty());

    // Reopening keeps earlier entries and notes.
    let mut b = Bundle::open(tmp.path()).unwrap();
    b.write_csv("u.csv", "c\n").unwrap();
    b.finish().unwrap();
    let manifest = fs::read_to_string(tmp.path().join("MANIFEST")).unwrap();
    assert_eq!(manifest.lines().count(), 4);
    assert!(manifest.ends_with("# hello\n"));

    fs::write(tmp.path().join("t.csv"), "tampered").unwrap();
    assert_eq!(verify_manifest(tmp.path()).unwrap(), ["t.csv"]);
    let text = fs::read_to_string(tmp.path().join("x.json")).unwrap().replace("\"seed\": ", "\"seed\": 1");
    fs::write(tmp.path().join("x.json"), text).unwrap();
    assert!(read_artifact::<Vec<f64>>(&tmp.path().join("x.json")).is_err());
}
