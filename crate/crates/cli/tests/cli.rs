use std::path::Path;
use std::process::{Command, Output};

use aptomo_cli::ExperimentConfig;

fn aptomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aptomo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn metric(csv: &str, name: &str) -> f64 {
    csv.lines()
        .find_map(|l| {
            let mut parts = l.split(',');
            (parts.next() == Some(name)).then(|| parts.next().unwrap().parse().unwrap())
        })
        .unwrap_or_else(|| panic!("{name} missing from\n{csv}"))
}

#[test]
fn config_echo_round_trips_through_a_file() {
    let out = aptomo(&["config", "--smoke", "--set", "noise.eta=0.1", "--set", "solver.method=apts"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("noise.eta = 0.1\n"));
    assert!(text.contains("phantom.n = 32\n"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("echo.txt");
    std::fs::write(&path, &text).unwrap();
    let again = aptomo(&["config", "-c", path.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(stdout(&again), text);
    assert_eq!(ExperimentConfig::parse_text(&text).unwrap().to_text(), text);
}

#[test]
fn configuration_errors_exit_with_two() {
    for args in [
        &["config", "--set", "probe.size=3"][..],
        &["config", "--set", "phantom.n=abc"],
        &["config", "--set", "noise.eta=-1"],
        &["config", "--set", "probe.mbar=256"],
        &["config", "--set", "missing-equals"],
        &["config", "-c", "/nonexistent/aptomo.cfg"],
    ] {
        let out = aptomo(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
    assert_eq!(aptomo(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_metrics_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let o = out_dir.to_str().unwrap();
    let out = aptomo(&["run", "--smoke", "--set", "solver.max_outer=3", "--set", "solver.method=apts", "-o", o]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "config.txt",
        "measurements.bin",
        "metrics.csv",
        "apts.vol",
        "apts_convergence.csv",
        "apts_z16_mag.pgm",
        "apts_z16_phase.pgm",
        "apts_z16.map",
        "truth_z16_mag.pgm",
    ] {
        assert!(Path::new(o).join(name).is_file(), "{name}");
    }
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(stdout(&out), csv);
    assert_eq!(metric(&csv, "apts.iterations"), 3.0);
    assert!(!csv.contains("apt.snr_db"));

    let vol = out_dir.join("apts.vol");
    let meas = out_dir.join("measurements.bin");
    let scored = aptomo(&[
        "metrics",
        "--smoke",
        "--volume",
        vol.to_str().unwrap(),
        "--measurements",
        meas.to_str().unwrap(),
    ]);
    assert!(scored.status.success());
    let scored = stdout(&scored);
    assert_eq!(metric(&scored, "snr_db"), metric(&csv, "apts.snr_db"));
    assert_eq!(metric(&scored, "r_factor"), metric(&csv, "apts.r_factor"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = |name: &str| {
        let d = dir.path().join(name);
        let out = aptomo(&["simulate", "--smoke", "--set", "noise.eta=0.5", "-o", d.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read(d.join("measurements.bin")).unwrap()
    };
    assert_eq!(bytes("a"), bytes("b"));
}

#[test]
fn missing_volume_is_a_runtime_error() {
    let out = aptomo(&["metrics", "--smoke", "--volume", "/nonexistent/u.vol"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn selfcheck_passes() {
    let out = aptomo(&["selfcheck", "--trials", "5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
