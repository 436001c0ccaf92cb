use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use etes::config::REFERENCE_CFG;

fn etes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etes"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn reference_cfg(dir: &Path) -> PathBuf {
    write_config(dir, REFERENCE_CFG)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_reproduces_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());
    let out = tmp.path().join("run");
    let res = etes(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));

    for name in ["trajectory.csv", "events.csv", "avg_trajectory.csv", "report.txt"] {
        let written = fs::read(out.join(name)).unwrap();
        let golden = fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap();
        assert!(written == golden, "{name} differs from golden copy");
    }
}

#[test]
fn single_iteration_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());
    let out = tmp.path().join("one");
    let res = etes(&["run", "--config", s(&cfg), "--out", s(&out), "--iters", "1", "--mode", "true-loop"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 2);
    assert!(!out.join("avg_trajectory.csv").exists());
}

#[test]
fn average_mode_writes_average_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());
    let out = tmp.path().join("avg");
    let res = etes(&["run", "--config", s(&cfg), "--out", s(&out), "--mode", "average"]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(out.join("avg_trajectory.csv").exists());
    assert!(!out.join("trajectory.csv").exists());
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("\ndecay = pass"), "{report}");
    assert!(report.contains("envelope.gradient = pass"));
    assert!(report.contains("min_inter_event_estimate = 4"));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &REFERENCE_CFG.replace("sigma = 0.7", "sigma = 1.3"));
    let res = etes(&["run", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("trigger.sigma must lie in (0,1)"));

    let empty = write_config(tmp.path(), "");
    let res = etes(&["check", "--config", s(&empty)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("missing required keys: map.q_star"));
}

#[test]
fn io_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());

    let missing = tmp.path().join("nope.cfg");
    assert_eq!(etes(&["check", "--config", s(&missing)]).status.code(), Some(2));

    // a regular file in the way of the output directory
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, "x").unwrap();
    let res = etes(&["run", "--config", s(&cfg), "--out", s(&blocker.join("out"))]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
}

#[test]
fn existing_results_are_not_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());
    let out = tmp.path().join("run");
    assert!(etes(&["run", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let before = fs::read(out.join("report.txt")).unwrap();
    let res = etes(&["run", "--config", s(&cfg), "--out", s(&out), "--iters", "5"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(fs::read(out.join("report.txt")).unwrap(), before);
}

#[test]
fn check_prints_assumption_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());
    let res = etes(&["check", "--config", s(&cfg)]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("rho0 = 0.8488"));
    assert!(text.contains("alpha_satisfies = false"));
}

#[test]
fn sweep_sigma_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());
    let out = tmp.path().join("sweep");
    let res = etes(&["sweep", "--config", s(&cfg), "--param", "sigma", "--values", "0.3,0.5,0.7", "--out", s(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "value,event_count,mean_gap_seconds,final_theta_error,decay_pass,rho0");
    assert_eq!(lines.len(), 4);
    let values: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(values, ["0.3", "0.5", "0.7"]);
    // each entry is a full experiment in its own directory
    assert!(out.join("000_trigger.sigma=0.3/trajectory.csv").exists());
    assert!(out.join("002_trigger.sigma=0.7/report.txt").exists());
}

#[test]
fn sweep_epsilon_recomputes_rho0() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());
    let out = tmp.path().join("sweep");
    let res = etes(&["sweep", "--config", s(&cfg), "--param", "loop.epsilon", "--values", "0.09,0.18", "--out", s(&out)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let eps: f64 = cols[0].parse().unwrap();
        let rho0: f64 = cols[5].parse().unwrap();
        assert!((rho0 - (1.0 - eps * 0.01 * 0.7 * 240.0 / 2.0)).abs() < 1e-12, "{line}");
    }
}

#[test]
fn sweep_rejects_bad_requests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = reference_cfg(tmp.path());

    let res = etes(&["sweep", "--config", s(&cfg), "--param", "colour", "--values", "1", "--out", s(&tmp.path().join("a"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("sweepable keys: map.q_star"));

    let res = etes(&["sweep", "--config", s(&cfg), "--param", "sigma", "--values", "", "--out", s(&tmp.path().join("b"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("at least one value"));

    let res = etes(&["sweep", "--config", s(&cfg), "--param", "sigma", "--values", "0.5,1.5", "--out", s(&tmp.path().join("c"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("trigger.sigma must lie in (0,1)"));
    assert!(!tmp.path().join("c").exists());
}
