use std::fs;
use std::path::Path;
use std::process::Command;

use bohmtau::cli::ExperimentConfig;

fn bohmtau(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bohmtau")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn short_validation() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("gausson-friction").unwrap();
    cfg.snapshots.t_end = 0.5;
    cfg
}

#[test]
fn analytic_preset_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bohmtau(&["--preset", "electron", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["electron_tau_b_comparison"]["order_of_magnitude_discrepancy"], true);
    assert!(dir.path().join("width.csv").exists());
}

#[test]
fn validation_passes_and_fails_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_validation();
    let path = write_config(dir.path(), &cfg);
    let out_dir = dir.path().join("ok");
    let out = bohmtau(&["--config", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));

    let mut strict = cfg;
    strict.tolerances.width_rel = 1e-300;
    let path = write_config(dir.path(), &strict);
    let out_dir = dir.path().join("strict");
    let out = bohmtau(&["--config", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bohmtau(&["--preset", "no-such-preset", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"mode": "analytic", "dimensionless": {"nu_t": -1, "kappa_t": 1}}"#).unwrap();
    let out = bohmtau(&["--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nu"));

    // a packet that does not fit the domain
    let mut cfg = short_validation();
    cfg.grid.x_min = -2.0;
    cfg.grid.x_max = 2.0;
    let path = write_config(dir.path(), &cfg);
    let out = bohmtau(&["--config", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("trajectories").unwrap();
    cfg.snapshots.t_end = 0.5;
    let path = write_config(dir.path(), &cfg);
    let runs: Vec<_> = ["1", "4"]
        .iter()
        .map(|threads| {
            let out_dir = dir.path().join(format!("t{threads}"));
            let out = bohmtau(&["--config", &path, "--threads", threads, "--out", out_dir.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            out_dir
        })
        .collect();
    let mut names: Vec<_> = fs::read_dir(&runs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "trajectories.csv"));
    for name in names {
        let a = fs::read(runs[0].join(&name)).unwrap();
        let b = fs::read(runs[1].join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between thread counts");
    }
}
