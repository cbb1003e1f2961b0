//! End-to-end checks of the compiled binary: exit codes, emitted files, and
//! byte-level reproducibility of the CSVs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stomax"))
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "# small TM run\nscheme=method3\nnx=9\nny=7\ndt=0.002\nt_end=0.01\n\
         trunc_m=8\ntrunc_l=8\npaths=4\nseed=11\nsolver_tol=1e-11\n",
    )
    .unwrap();
    path
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn noise_info_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["noise-info", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_success(&out);
    let csv = fs::read_to_string(dir.path().join("noise_info.csv")).unwrap();
    assert!(csv.starts_with("m,l,eta,a\n"));
    assert_eq!(csv.lines().count(), 1 + 50 * 50);
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("output="));
    assert!(manifest.contains("seed=2026"));
}

#[test]
fn energy_run_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = bin()
            .args(["energy", "--svg", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_success(&out);
    }
    let a = fs::read(out_a.join("energy.csv")).unwrap();
    let b = fs::read(out_b.join("energy.csv")).unwrap();
    assert_eq!(a, b);
    assert!(out_a.join("energy.svg").exists());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("step,time,mean_phi,var_phi,min_phi,max_phi,predicted_line\n"));
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out_dir, seed) in [(&out_a, "11"), (&out_b, "12")] {
        let out = bin()
            .args(["energy", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert_success(&out);
    }
    let a = fs::read(out_a.join("energy.csv")).unwrap();
    let b = fs::read(out_b.join("energy.csv")).unwrap();
    assert_ne!(a, b);
    let manifest = fs::read_to_string(out_b.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=12"));
}

#[test]
fn symplectic_reports_small_residual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = bin()
        .args(["symplectic", "--steps", "5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_success(&out);
    let csv = fs::read_to_string(dir.path().join("msymp.csv")).unwrap();
    assert!(csv.starts_with("step,max_residual\n"));
    for line in csv.lines().skip(1) {
        let r: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(r < 1e-9, "residual {r}");
    }
}

#[test]
fn simulate_emits_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = bin()
        .args(["simulate", "--snapshot-every", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_success(&out);
    // 5 steps at cadence 2: snapshots at 0, 2, 4, 5
    for step in [0u64, 2, 4, 5] {
        let p = dir.path().join(format!("snapshot_{step:06}.csv"));
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("i,j,x,y,h1,h2,h3,e1,e2,e3\n"));
        assert_eq!(text.lines().count(), 1 + 9 * 7);
    }
    assert!(!dir.path().join("snapshot_000001.csv").exists());
}

#[test]
fn bad_config_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "paths=0\n").unwrap();
    let out = bin()
        .args(["energy", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("P >= 1"), "{err}");
}

#[test]
fn method1_on_even_grid_fails_with_parity_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("even.cfg");
    fs::write(&cfg, "scheme=method1\nnx=16\nny=12\ndt=0.002\nt_end=0.01\npaths=1\n").unwrap();
    let out = bin()
        .args(["energy", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("odd node counts"), "{err}");
}
