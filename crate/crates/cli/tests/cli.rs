//! End-to-end tests of the command-line pipeline, driving the built
//! binary on small configurations and checking the stage contracts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gqme")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawning the gqme binary")
}

fn write_rabi_config(dir: &Path) -> PathBuf {
    let path = dir.join("rabi.cfg");
    std::fs::write(
        &path,
        "epsilon = 1.0\ngamma = 1.0\nbeta = 5.0\nxi = 0.0\nomega_c = 1.0\nomega_max = 5\n\
         n_modes = 1\ndt = 1.50083e-3\nt_final = 2.0\nn_fock = 2\ntt_rank = 8\nbackend = tt\n",
    )
    .unwrap();
    path
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gqme_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn propagate_line_count_and_determinism() {
    let dir = tempdir("prop");
    let cfg = write_rabi_config(&dir);
    let out1 = dir.join("u1.dat");
    let out2 = dir.join("u2.dat");
    for out in [&out1, &out2] {
        let r = run(&[
            "propagate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    }
    let text = std::fs::read_to_string(&out1).unwrap();
    let data_lines = text.lines().filter(|l| !l.starts_with('#')).count();
    let expect = (2.0f64 / 1.50083e-3).round() as usize + 1;
    assert_eq!(data_lines, expect, "n_steps line-count contract");
    // Identical invocations produce byte-identical artifacts.
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_config_key_names_it_and_exits_one() {
    let dir = tempdir("badcfg");
    let path = dir.join("broken.cfg");
    std::fs::write(
        &path,
        "epsilon = 1.0\ngamma = 1.0\nbeta = 5.0\nxi = 0.0\nomega_c = 1.0\n\
         n_modes = 1\ndt = 1.50083e-3\nt_final = 1.0\nn_fock = 2\ntt_rank = 8\nbackend = tt\n",
    )
    .unwrap();
    let r = run(&[
        "propagate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.join("u.dat").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("omega_max"), "stderr must name the key: {err}");
}

#[test]
fn dense_limit_exceeded_is_numerical_failure() {
    let dir = tempdir("limit");
    let cfg = write_rabi_config(&dir);
    let r = run(&[
        "propagate",
        "--config",
        cfg.to_str().unwrap(),
        "--backend",
        "dense",
        "--set",
        "n_modes=4",
        "--set",
        "n_fock=10",
        "--out",
        dir.join("u.dat").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn full_pipeline_reproduces_rabi_through_every_type() {
    let dir = tempdir("pipe");
    let cfg = write_rabi_config(&dir);
    let out = dir.join("run");
    let r = run(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));

    // Kernel files for all four types plus the inhomogeneous term exist.
    for name in [
        "useries.dat",
        "pfi.dat",
        "kernel-full.dat",
        "kernel-pop.dat",
        "kernel-donor.dat",
        "kernel-acceptor.dat",
        "inhom-acceptor.dat",
        "result-full.dat",
        "result-pop.dat",
        "result-donor.dat",
        "result-acceptor.dat",
        "manifest.txt",
    ] {
        assert!(out.join(name).exists(), "missing artifact {name}");
    }

    // Compare every route against the closed form. The short grid keeps
    // the run fast; the tolerance matches the measured dt² error level.
    let tol = "1e-4";
    for (a, a2) in [
        ("result-full.dat", None),
        ("result-pop.dat", None),
        ("result-donor.dat", Some("result-acceptor.dat")),
        ("useries.dat", None),
    ] {
        let a_path = out.join(a);
        let mut args = vec![
            "compare".to_string(),
            "--a".into(),
            a_path.to_str().unwrap().into(),
        ];
        if let Some(second) = a2 {
            args.push("--a2".into());
            args.push(out.join(second).to_str().unwrap().into());
        }
        args.extend(["--b".into(), "rabi:1.0:1.0".into(), "--tol".into(), tol.into()]);
        let r = Command::new(bin()).args(&args).output().unwrap();
        assert!(
            r.status.success(),
            "{a} vs closed form: {}{}",
            String::from_utf8_lossy(&r.stdout),
            String::from_utf8_lossy(&r.stderr)
        );
    }

    // Manifest chains fingerprints: the pfi row's input must equal the
    // propagate row's fingerprint.
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    let mut u_fp = String::new();
    let mut pfi_input = String::new();
    for line in manifest.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f[0] {
            "propagate" => u_fp = f[2].to_string(),
            "pfi" => pfi_input = f[3].to_string(),
            _ => {}
        }
    }
    assert!(!u_fp.is_empty() && u_fp == pfi_input, "fingerprint chain broken");
}

#[test]
fn compare_self_is_zero_and_exit_codes() {
    let dir = tempdir("cmp");
    let cfg = write_rabi_config(&dir);
    let out = dir.join("u.dat");
    let r = run(&[
        "propagate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let r = run(&[
        "compare",
        "--a",
        out.to_str().unwrap(),
        "--b",
        out.to_str().unwrap(),
        "--tol",
        "1e-300",
    ]);
    assert!(r.status.success(), "self comparison must be exactly zero");
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("0"), "metric printed: {stdout}");
    // A hopeless tolerance trips exit code 3.
    let r = run(&[
        "compare",
        "--a",
        out.to_str().unwrap(),
        "--b",
        "rabi:0.0:1.0",
        "--tol",
        "1e-12",
    ]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn kernel_stage_operates_purely_on_files() {
    let dir = tempdir("stages");
    let cfg = write_rabi_config(&dir);
    let u = dir.join("u.dat");
    let pfi = dir.join("pfi.dat");
    let kernel = dir.join("k.dat");
    let inhom = dir.join("k.dat.inhom");
    let result = dir.join("r.dat");
    assert!(run(&["propagate", "--config", cfg.to_str().unwrap(), "--out", u.to_str().unwrap()])
        .status
        .success());
    assert!(run(&["pfi", "--input", u.to_str().unwrap(), "--out", pfi.to_str().unwrap()])
        .status
        .success());
    let r = run(&[
        "kernel",
        "--input",
        pfi.to_str().unwrap(),
        "--type",
        "acceptor",
        "--out",
        kernel.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    assert!(inhom.exists(), "acceptor kernel stage must emit the inhomogeneous term");
    let r = run(&[
        "gqme",
        "--kernel",
        kernel.to_str().unwrap(),
        "--inhom",
        inhom.to_str().unwrap(),
        "--out",
        result.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    // Type mismatch check.
    let r = run(&[
        "gqme",
        "--kernel",
        kernel.to_str().unwrap(),
        "--inhom",
        inhom.to_str().unwrap(),
        "--type",
        "full",
        "--out",
        result.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn memtime_finds_short_memory_for_truncated_kernel() {
    let dir = tempdir("memtime");
    let cfg = write_rabi_config(&dir);
    let u = dir.join("u.dat");
    let pfi = dir.join("pfi.dat");
    let kernel = dir.join("k.dat");
    let out = dir.join("m.dat");
    assert!(run(&["propagate", "--config", cfg.to_str().unwrap(), "--out", u.to_str().unwrap()])
        .status
        .success());
    assert!(run(&["pfi", "--input", u.to_str().unwrap(), "--out", pfi.to_str().unwrap()])
        .status
        .success());
    // Full kernel of the closed system vanishes; any truncation works, so
    // the search must come back with a very short memory time.
    assert!(run(&[
        "kernel",
        "--input",
        pfi.to_str().unwrap(),
        "--type",
        "full",
        "--out",
        kernel.to_str().unwrap(),
    ])
    .status
    .success());
    let r = run(&[
        "memtime",
        "--kernel",
        kernel.to_str().unwrap(),
        "--conv-param",
        "1e-3",
        "--stride",
        "0.25",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    let t_mem: f64 = stdout
        .split_whitespace()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(f64::NAN);
    assert!(t_mem < 0.5, "vanishing kernel should truncate early, got {t_mem} ({stdout})");
}
