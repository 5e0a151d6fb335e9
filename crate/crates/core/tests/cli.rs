//! End-to-end checks of the `fdlab` binary: exit codes, output shapes,
//! and manifest discipline.

use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fdlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn exponents_round_trip_and_regime_gate() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_cfg(dir.path(), "good.cfg", "n=6\nm=0\nD=1\n");
    let out = run(&["exponents", &good]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("mu=2 beta=0.25"), "{stdout}");
    assert!(stdout.contains("l_star=5 alpha_star=1"), "{stdout}");

    let boundary = write_cfg(dir.path(), "boundary.cfg", "n=6\nm=0.5\nD=1\n");
    let out = run(&["exponents", &boundary]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m must be < m_star=0.5"));

    let low_dim = write_cfg(dir.path(), "lowdim.cfg", "n=2\nm=0\nD=1\n");
    assert_eq!(run(&["exponents", &low_dim]).status.code(), Some(2));

    let unknown = write_cfg(dir.path(), "unknown.cfg", "n=6\nm=0\nD=1\nwat=1\n");
    assert_eq!(run(&["exponents", &unknown]).status.code(), Some(2));
}

#[test]
fn phi_exports_csv_with_manifest_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("phi.csv");
    let cfg = write_cfg(
        dir.path(),
        "phi.cfg",
        &format!(
            "n=6\nm=0\nD=1\nalpha=0.75\nd=1\nr_max=1e4\noutput_path={}\n",
            out_csv.display()
        ),
    );
    let out = run(&["phi", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let tail: f64 = stdout
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("tail_exponent="))
        .expect("tail exponent in summary")
        .parse()
        .unwrap();
    assert!((tail - 0.5).abs() <= 0.01, "{stdout}");

    let content = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = content.lines();
    assert!(lines.next().unwrap().starts_with("# fdlab phi v"));
    assert!(content.lines().any(|l| l.starts_with("# run_id=")));
    assert!(content.lines().any(|l| l == "r,phi,dphi"));
    assert!(content.lines().last().unwrap().starts_with("# summary"));

    // sign-change case reports a finite first zero
    let cfg2 = write_cfg(dir.path(), "phi2.cfg", "n=6\nm=0\nD=1\nalpha=1.2\nr_max=1e6\n");
    let out = run(&["phi", &cfg2]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("first_zero="));

    // rejected precondition
    let cfg3 = write_cfg(dir.path(), "phi3.cfg", "n=6\nm=0\nD=1\nalpha=0\n");
    assert_eq!(run(&["phi", &cfg3]).status.code(), Some(2));
}

#[test]
fn figures_emit_reference_rows() {
    let dir = tempfile::tempdir().unwrap();
    let f1 = dir.path().join("f1.csv");
    let cfg = write_cfg(
        dir.path(),
        "f1.cfg",
        &format!("n=6\nm=0\nD=1\noutput_path={}\n", f1.display()),
    );
    assert_eq!(run(&["figure1", &cfg]).status.code(), Some(0));
    let content = std::fs::read_to_string(&f1).unwrap();
    let first = content
        .lines()
        .find(|l| !l.starts_with('#') && !l.starts_with('m'))
        .unwrap();
    assert_eq!(first, "0,5,4");

    let f2 = dir.path().join("f2.csv");
    let cfg = write_cfg(
        dir.path(),
        "f2.cfg",
        &format!("n=6\nm=0\nD=1\noutput_path={}\n", f2.display()),
    );
    assert_eq!(run(&["figure2", &cfg]).status.code(), Some(0));
    let content = std::fs::read_to_string(&f2).unwrap();
    assert!(content.lines().any(|l| l == "5,1"));
    assert!(content.trim_end().ends_with("# alpha_star=1"));

    // byte-identical re-run
    let before = std::fs::read(&f2).unwrap();
    assert_eq!(run(&["figure2", &cfg]).status.code(), Some(0));
    assert_eq!(before, std::fs::read(&f2).unwrap());
}

#[test]
fn evolve_writes_snapshots_at_cadence() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("run");
    let cfg = write_cfg(
        dir.path(),
        "evolve.cfg",
        &format!(
            "n=6\nm=0\nD=1\ncase=i\ndelta=0.5\nc=0.5\nl=4.5\ngrid_n=400\nstretch=1.01\nr_max=40\nt_end=1\ncadence=0.5\noutput_path={}\n",
            prefix.display()
        ),
    );
    let out = run(&["evolve", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // snapshots at t = 0, 0.5, 1.0 plus the manifest
    for idx in 0..3 {
        let snap = dir.path().join(format!("run_{idx:04}.csv"));
        let content = std::fs::read_to_string(&snap).unwrap();
        assert!(content.lines().any(|l| l == "r,v,zeta"), "snapshot {idx}");
        assert!(content.lines().any(|l| l.starts_with("# t=")));
    }
    assert!(dir.path().join("run_manifest.txt").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("snapshots=3"), "{stdout}");
}

#[test]
fn rate_sweep_row_format() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let cfg = write_cfg(
        dir.path(),
        "sweep.cfg",
        &format!(
            "n=6\nm=0\nD=1\ncase=i\ndelta=0.5\nc=0.5\nl=4.5\ngrid_n=600\nstretch=1.01\nr_max=150\nt_end=14\nsens=0\noutput_path={}\n",
            csv.display()
        ),
    );
    let out = run(&["rate-sweep", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let content = std::fs::read_to_string(&csv).unwrap();
    assert!(content
        .lines()
        .any(|l| l == "l,target_rate,fitted_rate,rel_err,rmax_sensitivity"));
    let row = content
        .lines()
        .find(|l| l.starts_with("4.5,0.75,"))
        .expect("data row");
    let rel_err: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!(rel_err < 0.10, "{row}");
}
