use fpsi_cli::{parse, Task, EXIT_ERROR, EXIT_OK, EXIT_PARTIAL};
use fpsi_core::diagnostics::{read_energy_csv, SweepKind, VtkData, ENERGY_CSV_COLUMNS};
use std::path::Path;
use std::process::Command;

fn fpsi(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fpsi")).args(args).output().expect("binary runs")
}

fn short_config(dir: &Path) -> String {
    let p = dir.join("c.toml");
    std::fs::write(&p, "dt = 0.0625\nt_final = 0.25\n").unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn parse_examples() {
    let dir = tempfile::tempdir().unwrap();
    let c = short_config(dir.path());
    let spec = parse(["run", "--config", &c]).unwrap();
    assert_eq!(spec.task, Task::Run);
    assert_eq!(spec.config.dt, 0.0625);
    let spec = parse(["run", "--config", &c, "--set", "dt=0.03125", "--set", "h=0.5"]).unwrap();
    assert_eq!((spec.config.dt, spec.config.h), (0.03125, 0.5));
    assert_eq!(spec.overrides.len(), 2);
    let spec = parse(["sweep-dt", "--config", &c, "--levels", "3"]).unwrap();
    assert_eq!(spec.task, Task::Sweep { kind: SweepKind::Dt, values: vec![0.0625, 0.03125, 0.015625] });

    let err = parse(["frobnicate"]).unwrap_err();
    assert_eq!(err.code, EXIT_ERROR);
    assert!(err.message.contains("frobnicate"));
    assert!(parse(["run", "--frob"]).unwrap_err().message.contains("--frob"));
    assert!(parse(["run", "--set", "nonsense=1"]).unwrap_err().message.contains("nonsense"));
    assert!(parse(["run", "--set", "refine=two"]).unwrap_err().message.contains("refine"));
    assert!(parse(["run", "--config", "/nonexistent/c.toml"]).is_err());
    assert!(parse(["run", "--set", "dt=0.3"]).is_err());
    assert_eq!(parse(["--help"]).unwrap_err().code, EXIT_OK);
}

#[test]
fn run_writes_artifacts_and_echo_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let c = short_config(dir.path());
    let out1 = dir.path().join("a");
    let o = fpsi(&["run", "--config", &c, "--set", "h=0.5", "--out", out1.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.toml", "energy.csv", "summary.json", "energy.svg", "interface.svg", "fields/biot_deformed.vtk", "fields/fluid_reference.vtk"] {
        assert!(out1.join(f).exists(), "{f}");
    }
    let rows = read_energy_csv(&out1.join("energy.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    let header = std::fs::read_to_string(out1.join("energy.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), ENERGY_CSV_COLUMNS.join(","));
    VtkData::read(&out1.join("fields/biot_reference.vtk")).unwrap();

    let out2 = dir.path().join("b");
    let echo = out1.join("config.toml");
    let o = fpsi(&["run", "--config", echo.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let a = std::fs::read(out1.join("energy.csv")).unwrap();
    let b = std::fs::read(out2.join("energy.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(std::fs::read(out1.join("config.toml")).unwrap(), std::fs::read(out2.join("config.toml")).unwrap());
}

#[test]
fn partial_and_error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let c = short_config(dir.path());
    let out = dir.path().join("p");
    let o = fpsi(&["run", "--config", &c, "--set", "clearance_margin=0.9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_PARTIAL as i32));
    assert!(String::from_utf8_lossy(&o.stderr).contains("PARTIAL"));
    let rows = read_energy_csv(&out.join("energy.csv")).unwrap();
    assert!(!rows.is_empty() && rows.len() < 4);
    let o = fpsi(&["run", "--config", &c, "--set", "clearance_margin=0.9", "--allow-partial", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = fpsi(&["run", "--config", &c, "--set", "jac_bound=1.01", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR as i32));
    let o = fpsi(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR as i32));
    let o = Command::new(env!("CARGO_BIN_EXE_fpsi")).env("FPSI_THREADS", "many").args(["run", "--config", &c]).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_ERROR as i32));
}

#[test]
fn sweep_h_writes_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let c = short_config(dir.path());
    let out = dir.path().join("s");
    let o = Command::new(env!("CARGO_BIN_EXE_fpsi"))
        .env("FPSI_THREADS", "2")
        .args(["sweep-h", "--config", &c, "--values", "1,0.5,0.25", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for h in ["1", "0.5", "0.25"] {
        let d = out.join(format!("h_{h}"));
        assert!(d.join("summary.json").exists() && d.join("energy.csv").exists() && d.join("config.toml").exists());
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);
    assert_eq!(report["horizons_identical"], serde_json::Value::Bool(true));
}

#[test]
fn zero_datum_sweeps_report_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let c = short_config(dir.path());
    let out = dir.path().join("z");
    let o = fpsi(&["sweep-delta", "--config", &c, "--set", "datum=zero", "--values", "0.4,0.2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for r in report["runs"].as_array().unwrap() {
        assert_eq!(r["e_final"].as_f64(), Some(0.0));
        assert_eq!(r["terminal_norm"].as_f64(), Some(0.0));
    }
}

#[test]
fn export_at_interior_time() {
    let dir = tempfile::tempdir().unwrap();
    let c = short_config(dir.path());
    let out = dir.path().join("e");
    let o = fpsi(&["export", "--config", &c, "--time", "0.1", "--reconstruction", "interpolant", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = VtkData::read(&out.join("fields/fluid_deformed.vtk")).unwrap();
    assert!(v.title.contains("t=1e-1"));
    let o = fpsi(&["export", "--config", &c, "--time", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR as i32));
}

#[test]
fn verify_prints_all_pass_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = fpsi(&["verify", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("0 failed"));
    assert!(!stdout.contains("FAIL"));
    assert!(out.join("verify.json").exists());
}
