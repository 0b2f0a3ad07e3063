//! Black-box checks of the compiled binary: exit codes, config
//! precedence, and artifact layout.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmfvb-cli"))
}

#[test]
fn run_without_experiment_or_config_is_config_error() {
    let out = bin().args(["run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--config") || err.contains("--experiment"), "{err}");
}

#[test]
fn invalid_config_field_named_in_error_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": "gaussian-toy", "method": "pmfvb", "particles": 10, "subsample": 99}"#,
    )
    .unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("subsample"), "error should name the field: {err}");
}

#[test]
fn toy_run_succeeds_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run1");
    let out = bin()
        .args([
            "run",
            "--experiment",
            "gaussian-toy",
            "--method",
            "pmfvb",
            "--particles",
            "50",
            "--subsample",
            "5",
            "--max-iters",
            "10",
            "--seed",
            "4",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "particles.csv", "metrics.json", "run_meta.json"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("oracle_mean_abs_err"), "{stdout}");
}

#[test]
fn flag_overrides_beat_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out_a = dir.path().join("a");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"experiment": "gaussian-toy", "method": "pmfvb", "particles": 50, "subsample": 5,
               "max_iters": 5, "seed": 1, "out": {:?}}}"#,
            out_a
        ),
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--max-iters", "7"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["max_iters"], 7);
}

#[test]
fn gen_data_writes_sv_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["gen-data", "--experiment", "sv", "--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("sv.csv")).unwrap();
    assert!(text.starts_with("t,y"));
    assert_eq!(text.lines().count(), 501);
}

#[test]
fn sweep_with_empty_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.json");
    std::fs::write(
        &spec,
        r#"{"template": {"experiment": "gaussian-toy", "method": "pmfvb"},
            "grid": {}, "seeds": [1]}"#,
    )
    .unwrap();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&spec)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_subcommand_forces_mala() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("oracle");
    let out = bin()
        .args([
            "oracle",
            "--experiment",
            "gaussian-toy",
            "--n-samples",
            "2000",
            "--step-size",
            "0.5",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["method"], "mala");
    assert!(out_dir.join("samples.csv").exists());
}
