use std::path::Path;
use std::process::Command as Process;

use maglab::cli::{run, CliError, Command, ExperimentConfig, FieldChoice};
use maglab::dynamics::{closure_check, FlowState, MagneticSystem};
use maglab::geometry::HPoint;

fn config_in(dir: &Path, toml: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(toml).unwrap();
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).expect("manifest written")).unwrap()
}

const CONSTANT: &str = "[system]\nfield = \"constant\"\ns = 1.0\n";

#[test]
fn flow_reports_the_closure_period() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &format!("{CONSTANT}[energy]\nk = 0.3\n"));
    let out = run(Command::Flow, &cfg).unwrap();
    let expected = closure_check(FlowState::at_energy(HPoint::I, 0.0, 0.3), &MagneticSystem::constant(1.0, 0.3).unwrap(), 100.0)
        .unwrap()
        .unwrap();
    let line = out.lines.iter().find(|l| l.starts_with("closed, period ≈ ")).expect("closure verdict");
    let period: f64 = line.trim_start_matches("closed, period ≈ ").split(' ').next().unwrap().parse().unwrap();
    assert!((period - expected).abs() < 1e-6 * expected, "{period} vs {expected}");
    assert!(dir.path().join("trajectory.csv").exists() && dir.path().join("trajectory.bin").exists());
    assert_eq!(manifest(dir.path())["subcommand"], "flow");
}

#[test]
fn flow_above_the_mane_value_does_not_close() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &format!("{CONSTANT}[energy]\nk = 0.6\n"));
    let out = run(Command::Flow, &cfg).unwrap();
    assert!(out.lines.iter().any(|l| l == "no closure within horizon"));
}

#[test]
fn bad_config_names_the_key() {
    let dt = ExperimentConfig::from_toml("[discretization]\ndt = 0.0\n").unwrap_err();
    assert!(matches!(&dt, CliError::Config { key, .. } if key == "discretization.dt"), "{dt}");
    assert_eq!(dt.exit_code(), 2);
    let unknown = ExperimentConfig::from_toml("[flow]\ntime = 3.0\nspeed = 2.0\n").unwrap_err();
    assert!(matches!(&unknown, CliError::Config { key, .. } if key == "flow.speed"), "{unknown}");
    let grid = ExperimentConfig::from_toml("[energy]\ngrid = [0.02, 0.01]\n").unwrap_err();
    assert!(matches!(&grid, CliError::Config { key, .. } if key == "energy.grid"));
    let tol = ExperimentConfig::from_toml("[tolerances]\nresidual = -1e-7\n").unwrap_err();
    assert!(matches!(&tol, CliError::Config { key, .. } if key == "tolerances.residual"));
}

#[test]
fn config_hash_ignores_key_order() {
    let a = ExperimentConfig::from_toml("seed = 4\n[energy]\nk = 0.03\n[system]\ns = 2.0\nfield = \"constant\"\n").unwrap();
    let b = ExperimentConfig::from_toml("[system]\nfield = \"constant\"\ns = 2.0\n[energy]\nk = 0.03\n[output]\n").unwrap();
    let mut b = b;
    b.seed = 4;
    assert_eq!(a.hash(), b.hash());
    b.seed = 5;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.system.field, FieldChoice::Constant);
}

#[test]
fn critical_values_of_the_constant_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Command::CriticalValues, &config_in(dir.path(), CONSTANT)).unwrap();
    assert_eq!(out.lines[0], "mane_upper = 0.5");
    assert!(out.lines.contains(&"tau_plus = 0".to_string()));
    assert!(out.lines.contains(&"tau_plus_star = 0".to_string()));
    for f in ["tau_plus_trace.csv", "mane_trace.csv", "critical_values.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn critical_values_of_the_oscillating_default() {
    let dir = tempfile::tempdir().unwrap();
    run(Command::CriticalValues, &config_in(dir.path(), "")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("critical_values.json")).unwrap()).unwrap();
    let tau = v["tau_plus"].as_f64().unwrap();
    let mane = v["mane_dynamical"].as_f64().unwrap();
    assert!(tau > 0.0 && mane > 0.0);
    assert_eq!(v["tau_plus_star"].as_f64().unwrap(), tau.min(mane));
}

#[test]
fn zero_field_gives_zero_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Command::CriticalValues, &config_in(dir.path(), "[system]\nfield = \"constant\"\ns = 0.0\n")).unwrap();
    assert_eq!(out.lines, ["mane_upper = 0", "mane_dynamical = 0", "tau_plus = 0", "tau_plus_star = 0"]);
}

#[test]
fn find_orbits_refuses_energies_above_tau_plus_star() {
    let dir = tempfile::tempdir().unwrap();
    let err = run(Command::FindOrbits, &config_in(dir.path(), "[energy]\nk = 0.05\n")).unwrap_err();
    assert!(matches!(err, CliError::Refused(_)));
    assert_eq!(manifest(dir.path())["converged"], false);
}

#[test]
fn find_orbits_without_iterates_reports_the_minimizer_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Command::FindOrbits, &config_in(dir.path(), "[search]\nn_max = 0\n")).unwrap();
    assert!(out.success);
    assert!(out.lines.iter().any(|l| l == "distinct orbits: 1"));
    assert!(dir.path().join("minimizer.json").exists());
    assert!(!dir.path().join("mountain_pass_1.json").exists());
}

#[test]
fn single_point_scan_has_one_row_per_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), "[energy]\ngrid = [0.02]\n[search]\nns = [1]\n");
    let out = run(Command::Scan, &cfg).unwrap();
    assert!(out.success);
    let csv = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().split(',').nth(3) == Some("true"));
    assert!(dir.path().join("scan_long.csv").exists());
}

#[test]
fn constant_field_scan_has_no_monotonicity_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &format!("{CONSTANT}[energy]\nrange = {{ min = 0.1, max = 0.3, points = 3 }}\n[search]\nns = [1]\nmax_iters = 2000\n"));
    let out = run(Command::Scan, &cfg).unwrap();
    assert!(out.lines.iter().any(|l| l == "monotonicity: no violations"));
    let audit = std::fs::read_to_string(dir.path().join("monotonicity.csv")).unwrap();
    assert_eq!(audit.lines().count(), 1);
    // No negative minimizer exists, so every cell fails and the exit status says so.
    assert!(!out.success);
    let mut partial = cfg.clone();
    partial.output.allow_partial = true;
    assert!(run(Command::Scan, &partial).unwrap().success);
}

#[test]
fn selftest_passes_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Command::Selftest, &config_in(dir.path(), "seed = 7\n")).unwrap();
    assert!(out.success, "{:?}", out.lines);
    assert_eq!(manifest(dir.path())["seed"], 7);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_maglab");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[discretization]\ndt = -1e-3\n").unwrap();
    let bad = Process::new(bin).args(["flow", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("discretization.dt"));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, format!("{CONSTANT}[energy]\nk = 0.3\n")).unwrap();
    let ok = Process::new(bin).args(["flow", "--jobs", "1", "--seed", "3", "--config"]).arg(&good).arg("--out").arg(dir.path()).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("closed, period ≈"));
    assert_eq!(manifest(dir.path())["seed"], 3);
}
