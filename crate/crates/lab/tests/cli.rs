//! End-to-end runs of the binary and of the library entry point.

use conicflow::{run, Kind, RunOptions, EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK};
use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conicflow"))
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ["shock", "beltrami", "tricomi-mode"] {
        let dirs = [tmp.path().join(format!("{kind}1")), tmp.path().join(format!("{kind}2"))];
        for d in &dirs {
            let st = bin().args([kind, "--out"]).arg(d).output().unwrap().status;
            assert!(st.success(), "{kind}");
        }
        let m = manifest(&dirs[0]);
        for a in m["artifacts"].as_array().unwrap() {
            let name = a.as_str().unwrap();
            assert_eq!(fs::read(dirs[0].join(name)).unwrap(), fs::read(dirs[1].join(name)).unwrap(), "{kind}/{name}");
        }
    }
}

#[test]
fn missing_gamma_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[shock]\nmach0 = 3.0\n");
    let out = tmp.path().join("o");
    let o = bin().args(["shock", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
    let m = manifest(&out);
    assert_eq!(m["status"], "config_error");
    assert!(m["error"].as_str().unwrap().contains("gamma"));
}

#[test]
fn all_config_problems_are_reported_together() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[gas]\ngamma = 0.9\n[shock]\nmach0 = \"fast\"\ntheta_c = 1.0\n");
    let o = run(Kind::Shock, &RunOptions { config: Some(cfg), out: Some(tmp.path().join("o")), ..Default::default() })
        .unwrap();
    assert_eq!(o.exit_code, EXIT_CONFIG);
    let e = o.manifest.error.unwrap();
    for needle in ["gas.gamma", "shock.mach0", "shock.theta_c"] {
        assert!(e.contains(needle), "{e}");
    }
}

#[test]
fn full_range_sweep_violates_monotonicity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[gas]\ngamma = 1.4\n[apple-sweep]\nrange = \"full\"\npoints = 20\n");
    let out = tmp.path().join("o");
    let st = bin().args(["apple-sweep", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(st.code(), Some(EXIT_INVARIANT));
    let m = manifest(&out);
    assert_eq!(m["status"], "invariant_violated");
    let failed: Vec<&str> = m["invariants"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"cone_speed_decreasing"), "{failed:?}");
    // The table is still written.
    assert!(fs::read_to_string(out.join("apple.csv")).unwrap().lines().count() == 21);
}

#[test]
fn inadmissible_robin_data_exit_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[gas]\ngamma = 1.4\n[rotational]\nmu_plus = -2.0\nntheta = 64\nnphi = 16\n");
    let o = run(Kind::Rotational, &RunOptions { config: Some(cfg), out: Some(tmp.path().join("o")), ..Default::default() })
        .unwrap();
    assert_eq!(o.exit_code, EXIT_INVARIANT);
    assert_eq!(o.manifest.status, "invariant_violated");
}

#[test]
fn grid_scale_changes_sample_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = |s: f64, d: &str| RunOptions { grid_scale: s, out: Some(tmp.path().join(d)), ..Default::default() };
    let a = run(Kind::Beltrami, &opts(1.0, "a")).unwrap();
    let b = run(Kind::Beltrami, &opts(0.5, "b")).unwrap();
    assert_eq!((a.exit_code, b.exit_code), (EXIT_OK, EXIT_OK));
    let rows = |d: &Path| fs::read_to_string(d.join("trajectory.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows(&a.out_dir), 401);
    assert_eq!(rows(&b.out_dir), 201);
    let bad = run(Kind::Beltrami, &opts(0.0, "c")).unwrap();
    assert_eq!(bad.exit_code, EXIT_CONFIG);
}

#[test]
fn manifest_records_identity_suite_and_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(Kind::Background, &RunOptions { out: Some(tmp.path().to_path_buf()), ..Default::default() }).unwrap();
    assert_eq!(o.exit_code, EXIT_OK);
    let m = manifest(tmp.path());
    assert_eq!(m["identity_suite"]["passed"], true);
    assert_eq!(m["parameters"]["gas"]["gamma"], 1.4);
    assert_eq!(m["parameters"]["background"]["samples"], 2048);
    let all: Vec<String> = m["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    for f in ["background.csv", "coefficients.csv", "multiplier.csv", "summary.json"] {
        assert!(all.iter().any(|a| a == f) && tmp.path().join(f).exists(), "{f}");
    }
}
