use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csl_turb_cli::csv;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csl-turb"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

/// Ran to completion; a failed check (exit 3) still writes every file.
fn completed(o: &Output) -> bool {
    matches!(o.status.code(), Some(0) | Some(3))
}

fn only_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

const SMALL: &[&str] = &[
    "simulate",
    "--preset",
    "grw_macro",
    "--set",
    "n_traj=64",
    "--set",
    "t_final=1e5",
];

#[test]
fn missing_source_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["params"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn params_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["params", "--preset", "grw_micro"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("reynolds"));
    let text = std::fs::read_to_string(only_dir(dir.path()).join("derived.csv")).unwrap();
    let (h, rows) = csv::parse(&text).unwrap();
    let re = rows[0][h.iter().position(|c| c == "reynolds").unwrap()];
    assert!((re / 1.149e-7 - 1.0).abs() < 1e-3, "{re}");
}

#[test]
fn bad_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "preset = grw_macro\nn_trajectories = 5\n").unwrap();
    let out = dir.path().join("runs");
    let o = run(&out, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_trajectories"));
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().count() == 0);

    let o = run(&out, &["params", "--preset", "grw_mega"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_matches_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("macro.cfg");
    std::fs::write(
        &cfg,
        "# GRW macro, spelled out\nalpha = 1e10\nlambda = 1e7\nmass = 1\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&a, &["params", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    assert!(run(&b, &["params", "--preset", "grw_macro"])
        .status
        .success());
    let read = |d: &Path| std::fs::read(only_dir(d).join("derived.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn same_seed_gives_identical_files_and_run_id() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert!(completed(&run(&a, SMALL)));
    assert!(completed(&run(&b, SMALL)));
    let mut other = SMALL.to_vec();
    other.extend(["--seed", "7"]);
    assert!(completed(&run(&c, &other)));
    let (da, db, dc) = (only_dir(&a), only_dir(&b), only_dir(&c));
    assert_eq!(da.file_name(), db.file_name());
    assert_ne!(da.file_name(), dc.file_name());
    for f in ["moments.csv", "paths.csv", "fits.csv"] {
        assert_eq!(
            std::fs::read(da.join(f)).unwrap(),
            std::fs::read(db.join(f)).unwrap()
        );
    }
    assert_ne!(
        std::fs::read(da.join("moments.csv")).unwrap(),
        std::fs::read(dc.join("moments.csv")).unwrap()
    );
}

#[test]
fn manifest_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    assert!(completed(&run(dir.path(), SMALL)));
    let d = only_dir(dir.path());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 0xC510);
    assert_eq!(m["config"]["n_traj"], "64");
    assert_eq!(m["config"]["lambda"], "1e7");
    let checks = m["checks"].as_array().unwrap();
    assert_eq!(checks[0]["name"], "var_x_reduced_chi_square");
    assert_eq!(m["all_passed"], checks[0]["passed"]);
    let files: Vec<&str> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    for f in &files {
        assert!(d.join(f).exists(), "{f}");
    }
    assert!(d
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .ends_with(m["run_id"].as_str().unwrap()));
}

#[test]
fn single_trajectory_marks_stderr_na() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--set", "n_traj=1"]);
    assert!(run(dir.path(), &args).status.success());
    let text = std::fs::read_to_string(only_dir(dir.path()).join("moments.csv")).unwrap();
    let (h, rows) = csv::parse(&text).unwrap();
    let i = h.iter().position(|c| c == "se_var_x").unwrap();
    assert!(rows.iter().all(|r| r[i].is_nan()));
    assert!(text.lines().nth(3).unwrap().contains("NA"));
}

#[test]
fn failed_check_sets_exit_code() {
    // The literal kinetic term drops the momentum-driven spreading of x.
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "fpe",
            "--preset",
            "grw_macro",
            "--compare",
            "--set",
            "kinetic=literal",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let m: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(only_dir(dir.path()).join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["all_passed"], false);
}

#[test]
fn scaling_flag_sets_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "scaling",
            "--preset",
            "grw_macro",
            "--A",
            "1.5",
            "--set",
            "n_traj=2000",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let d = only_dir(dir.path());
    let text = std::fs::read_to_string(d.join("fits.csv")).unwrap();
    assert!(text.contains("momentum,var_p"));
    let m = std::fs::read_to_string(d.join("manifest.json")).unwrap();
    assert!(m.contains("\"fractional_a\": \"1.5\""));
}

#[test]
fn burgers_forced_run_writes_fields() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "burgers",
            "--preset",
            "grw_macro",
            "--set",
            "n_steps=200",
            "--set",
            "sample_every=100",
        ],
    );
    assert!(o.status.success());
    let d = only_dir(dir.path());
    let (h, rows) = csv::parse(&std::fs::read_to_string(d.join("fields.csv")).unwrap()).unwrap();
    assert_eq!(h, ["t", "x", "v", "z", "h"]);
    assert_eq!(rows.len(), 3 * 128);
    assert!(d.join("spectrum.csv").exists());
}
