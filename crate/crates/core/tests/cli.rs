use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn mbdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbdp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mbdp(&["solve", "--config", "/no/such/model.toml", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/model.toml"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(mbdp(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mbdp(&[]).status.code(), Some(2));
    assert_eq!(mbdp(&["project", "zero", "--config", "x.toml"]).status.code(), Some(2));
    assert_eq!(mbdp(&["--help"]).status.code(), Some(0));
}

#[test]
fn schema_violation_is_reported_by_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("not_applicable.toml"))
        .unwrap()
        .replace("birth_lo = 1.0", "birth_lo = 7.0");
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let o = mbdp(&[
        "bounds",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("types[0].bounds"), "{}", stderr(&o));
}

#[test]
fn bounds_reports_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mbdp(&[
        "bounds",
        "--config",
        config("null_ergodic.toml").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("coordinate 1: null-ergodic applicable, σ=0.5, α*=1"), "{s}");
    let file = fs::read_to_string(dir.path().join("certificates.txt")).unwrap();
    assert!(file.contains("[null_ergodic.1]\napplicable = true\nsigma = 0.5\nalpha_star = 1\n"));

    let o = mbdp(&[
        "bounds",
        "--config",
        config("not_applicable.toml").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).contains("coordinate 1: weakly ergodic not applicable: L_j ≥ m_j"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn solve_project_and_simulate_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("weak_ergodic.toml");
    let cfg = cfg.to_str().unwrap();

    assert_eq!(
        mbdp(&[
            "solve",
            "--config",
            cfg,
            "--out",
            out,
            "--horizon",
            "1",
            "--grid-step",
            "0.5"
        ])
        .status
        .code(),
        Some(0)
    );
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,state_0,state_1,") && header.ends_with(",tail_mass"));
    assert_eq!(lines.count(), 3);

    assert_eq!(
        mbdp(&["project", "total", "--config", cfg, "--out", out, "--horizon", "1"])
            .status
            .code(),
        Some(0)
    );
    let csv = fs::read_to_string(dir.path().join("projection_total.csv")).unwrap();
    assert!(csv.starts_with("t,k,x_k,lambda_tilde_k,mu_tilde_k,defined\n"));
    assert_eq!(
        mbdp(&["project", "3", "--config", cfg, "--out", out]).status.code(),
        Some(2)
    );

    let sim = [
        "simulate", "--config", cfg, "--out", out, "--paths", "5000", "--seed", "4",
    ];
    assert_eq!(mbdp(&sim).status.code(), Some(0));
    let first = fs::read(dir.path().join("empirical.csv")).unwrap();
    assert_eq!(mbdp(&sim).status.code(), Some(0));
    assert_eq!(first, fs::read(dir.path().join("empirical.csv")).unwrap());
    assert!(String::from_utf8_lossy(&first).starts_with("t,coordinate,k,estimate,stderr,n_paths,seed\n"));

    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("subcommand = \"simulate\""));
    assert!(manifest.contains("\"empirical.csv\" = \"sha256:"));
}

#[test]
fn verify_writes_report_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mbdp(&[
        "verify",
        "--config",
        config("weak_ergodic.toml").to_str().unwrap(),
        "--out",
        out,
    ]);
    let report = fs::read_to_string(dir.path().join("verify_report.txt")).unwrap();
    assert_eq!(o.status.code(), Some(0), "{report}");
    assert!(report.lines().all(|l| l.starts_with("CHECK ") && l.contains(" PASS ")));
    assert!(report.contains("CHECK config_weak_decay_1 PASS"));
}

#[test]
fn verify_fails_when_a_check_fails() {
    // The death rule can now reach 4 while the declared upper bound is 3.
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("not_applicable.toml"))
        .unwrap()
        .replace("cap = 3.0", "cap = 4.0");
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let o = mbdp(&[
        "verify",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let report = fs::read_to_string(dir.path().join("verify_report.txt")).unwrap();
    assert!(report.contains("CHECK config_solve FAIL"), "{report}");
}
