use std::path::Path;
use std::process::{Command, Output};

use nonlocal_fv::sim::snapshot::read_snapshot;

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonlocal-fv"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

const SMALL: &str = r#"
[grid]
origin = [-1.0]
extent = [2.0]
cells = [40]

[potentials]
w1 = { kind = "newtonian", scale = 1.0 }
w2 = { kind = "exponential", scale = 0.5 }
k = { kind = "newtonian", scale = 1.0 }

[model]
beta = 0.5

[time]
t_final = 0.2
dt = 0.01

[[species1.measure]]
kind = "dirac"
location = [-0.3]

[[species2.measure]]
kind = "uniform_box"
lo = [0.0]
hi = [0.4]

[output]
dir = "out"
snapshot_every = 5
"#;

#[test]
fn check_reports_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["check", "test1"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("omega1 = 0.1"), "{text}");
    assert!(text.contains("kappa = 1"), "{text}");
    let max_dt: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max dt = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((max_dt - 0.02 / 2.2).abs() < 1e-15);
    assert!(text.contains("declared dt = 0.005"));
    assert!(text.trim_end().ends_with("OK"));
}

#[test]
fn check_flags_a_cfl_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, SMALL.replace("dt = 0.01", "dt = 0.05")).unwrap();
    let out = cli(&["check", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("CFL VIOLATION"));

    let out = cli(&["run", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 17") && err.contains("CFL"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn run_writes_diagnostics_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    let out = cli(&["run", path.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let run_dir = dir.path().join("out");
    let csv = std::fs::read_to_string(run_dir.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("time,step,mass1,mass2"));
    assert_eq!(lines.count(), 21);
    assert!(run_dir.join("meta.txt").exists());

    let snaps = run_dir.join("snapshots");
    let last = read_snapshot(&snaps, 20).unwrap();
    assert_eq!(last.step_index, 20);
    assert!((last.time - 0.2).abs() < 1e-15);
    assert!(read_snapshot(&snaps, 5).is_ok());
    assert!(read_snapshot(&snaps, 3).is_err());
}

#[test]
fn snapshot_cadence_and_output_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    let out = cli(
        &[
            "run",
            path.to_str().unwrap(),
            "--out",
            "elsewhere",
            "--snapshot-every",
            "10",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let snaps = dir.path().join("elsewhere/snapshots");
    let mut names: Vec<String> = std::fs::read_dir(&snaps)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "meta_000000.txt",
            "meta_000010.txt",
            "meta_000020.txt",
            "rho1_000000.csv",
            "rho1_000010.csv",
            "rho1_000020.csv",
            "rho2_000000.csv",
            "rho2_000010.csv",
            "rho2_000020.csv"
        ]
    );
}

#[test]
fn convergence_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(
        &[
            "convergence",
            "two_dirac_1d",
            "--levels",
            "3",
            "--out",
            "conv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("conv/convergence.csv")).unwrap();
    assert!(csv.starts_with("level,cells,dx,dt,species,distance,observed_order"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, SMALL.replace("beta = 0.5", "beta = -0.5")).unwrap();
    let out = cli(&["check", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 13") && err.contains("beta"), "{err}");
}

#[test]
fn unknown_scenario_and_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        cli(&["run", "no_such_scenario"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(cli(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn zero_length_run_writes_only_the_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.toml");
    std::fs::write(&path, SMALL.replace("t_final = 0.2", "t_final = 0.0")).unwrap();
    assert!(cli(&["run", path.to_str().unwrap()], dir.path())
        .status
        .success());
    let count = std::fs::read_dir(dir.path().join("out/snapshots"))
        .unwrap()
        .count();
    assert_eq!(count, 3);
    let csv = std::fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}
