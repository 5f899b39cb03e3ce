//! The command-line front end, driven as a subprocess.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use spdc_spatial::config::ExperimentConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdc-spatial"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn emitted_defaults_load_back() {
    let out = run(&["emit-defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn calibrate_echoes_the_trimmed_cut() {
    let out = run(&["calibrate"]);
    assert!(out.status.success());
    let cfg = ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(
        (cfg.crystal.cut_angle_deg - 42.276).abs() < 0.01,
        "{}",
        cfg.crystal.cut_angle_deg
    );
}

#[test]
fn synthetic_sweep_files_match_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = run(&[
            "sweep",
            "--mode",
            "synthetic",
            "--seed",
            "7",
            "--threads",
            threads,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
    assert_eq!(fa.len(), 12);
    assert_eq!(fa, fb);
    assert!(fa.contains_key("profile_+0.000.csv"));
    assert!(fa.contains_key("profile_-0.092.csv"));
}

#[test]
fn seed_flag_changes_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let out = run(&[
            "sweep",
            "--mode",
            "synthetic",
            "--seed",
            seed,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let name = "profile_+0.000.csv";
    assert_ne!(read_dir(a.path())[name], read_dir(b.path())[name]);
}

#[test]
fn check_exit_status_agrees_with_acceptance_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["check", "--out", dir.path().to_str().unwrap()]);
    let text = std::fs::read_to_string(dir.path().join("acceptance.txt")).unwrap();
    assert_eq!(text, String::from_utf8(out.stdout).unwrap());
    assert_eq!(text.lines().count(), 8);
    let all_pass = text.lines().all(|l| l.starts_with("[PASS]"));
    assert_eq!(out.status.success(), all_pass);
}

#[test]
fn invalid_config_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[sweep]\nalpha_p_deg = [0.1, 0.0]\n").unwrap();
    let out = run(&[
        "sweep",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly increasing"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
