//! The command-line front end: exit codes, outputs and configuration echo.

use std::path::Path;
use std::process::{Command, Output};

use fkfp::table::KernelTable;

fn fkfp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkfp"))
        .args(args)
        .env_remove("FKFP_OUT_DIR")
        .arg("--out_dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn kernel_writes_table_sidecar_and_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = fkfp(&["kernel", "--s", "1", "--window", "6"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = KernelTable::load(&dir.path().join("fkfp_kernel")).unwrap();
    assert_eq!(t.header.s, 1.0);
    assert!(t.header.mass_defect.unwrap().abs() < 1e-6);
    assert_eq!(t.header.meta.config["window"], "6");
    let csv = std::fs::read_to_string(dir.path().join("fkfp_kernel.csv")).unwrap();
    assert!(csv.starts_with("# rows: x = x0 + i*dx"));
    assert!(dir.path().join("fkfp_kernel_closed_form.csv").exists());
}

#[test]
fn config_file_and_flags_resolve_with_flags_winning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "s = 0.25\nmax_order = 1\nprefix = run\n").unwrap();
    let o = fkfp(&["audit-symbol", "--config", cfg.to_str().unwrap(), "--s", "0.75", "--per_decade", "2"], dir.path());
    assert!(matches!(o.status.code(), Some(0 | 1)));
    let report = json(&dir.path().join("run_audit_symbol.json"));
    assert_eq!(report["config"]["s"], "0.75");
    assert_eq!(report["config"]["max_order"], "1");
    assert_eq!(report["config"]["per_decade"], "2");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "sigma = 1\n").unwrap();
    assert_eq!(fkfp(&["kernel", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));
    assert_eq!(fkfp(&["kernel", "--s", "1.5"], dir.path()).status.code(), Some(2));
    assert_eq!(fkfp(&["kernel", "--coords", "polar"], dir.path()).status.code(), Some(2));
    assert_eq!(fkfp(&["evolve", "--n", "64", "--radius", "8", "--n_steps", "1", "--t_final", "5"], dir.path()).status.code(), Some(2));
}

#[test]
fn audit_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = fkfp(&["audit-symbol", "--s", "0.5", "--per_decade", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).trim_end().ends_with("FAIL"));
}

#[test]
fn evolve_writes_snapshots_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["evolve", "--s", "0.5", "--n", "64", "--radius", "8", "--init", "gaussian", "--t_final", "0.5", "--n_steps", "4", "--snap_every", "2"];
    let o = fkfp(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for k in [2, 4] {
        let snap = KernelTable::load(&dir.path().join(format!("fkfp_evolve_{k:05}"))).unwrap();
        assert!((snap.header.t - 0.125 * k as f64).abs() < 1e-12);
    }
    let log = std::fs::read_to_string(dir.path().join("fkfp_evolve_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 6);
    assert_eq!(json(&dir.path().join("fkfp_evolve.json"))["n_steps"], 4);
}

#[test]
fn output_directory_variable_overrides_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fkfp"))
        .args(["kernel", "--s", "1", "--window", "4"])
        .env("FKFP_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("fkfp_kernel.json").exists());
}
