//! Black-box tests of the binary: exit codes, config handling, and the
//! pareto/front-export file pipeline.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sparsest")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sparsest-cli-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .args(["--out-dir", dir.to_str().unwrap()])
        .output()
        .expect("spawn binary")
}

#[test]
fn usage_errors_exit_with_code_one() {
    let out = Command::new(bin()).arg("bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error_code=1"), "stderr: {err}");

    let out = Command::new(bin())
        .args(["generate", "--set", "no.such.key=1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_files_exit_with_code_two() {
    let dir = tmp("missing");
    let out = run_in(&dir, &["train"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error_code=2"), "stderr: {err}");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_file_is_loaded_and_flags_override_it() {
    let dir = tmp("config");
    let cfg_path = dir.join("run.conf");
    std::fs::write(
        &cfg_path,
        "# tiny dataset\nseed = 5\ndata.train = 3\ndata.val = 1\ndata.test = 1\n\
         data.frames = 6\ndata.height = 8\ndata.width = 8\n",
    )
    .unwrap();
    let out = Command::new(bin())
        .args([
            "generate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--set",
            "data.train=4",
            "--out-dir",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("dataset.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["data.train"], "4");
    assert_eq!(sidecar["config"]["seed"], "5");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bad_config_line_is_a_usage_error() {
    let dir = tmp("badcfg");
    let cfg_path = dir.join("run.conf");
    std::fs::write(&cfg_path, "this is not a key value line\n").unwrap();
    let out = Command::new(bin())
        .args(["generate", "--config", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn eval_emits_metrics_schema() {
    let dir = tmp("eval");
    let gen = [
        "generate", "--seed", "9", "--set", "data.train=4", "--set", "data.val=2",
        "--set", "data.test=2", "--set", "data.frames=8", "--set", "data.height=8",
        "--set", "data.width=8",
    ];
    let train = [
        "train", "--seed", "9", "--set", "model.hidden=3", "--set", "train.epochs=1",
        "--set", "train.batch=2", "--set", "train.w_mse=1.0",
    ];
    let eval = ["eval", "--set", "eval.warmup=4", "--set", "eval.horizon=4"];
    for args in [&gen[..], &train[..], &eval[..]] {
        let out = run_in(&dir, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
    for key in ["mse", "ar", "flops_dense", "flops_sparse", "config"] {
        assert!(metrics.get(key).is_some(), "metrics.json missing {key}");
    }
    // Sparse models report a numeric acceleration ratio.
    assert!(metrics["ar"].is_number());
    let cost = std::fs::read_to_string(dir.join("cost.csv")).unwrap();
    assert!(cost.starts_with("unit,d_x,d_h,flop_dense,flop_sparse,ar\n"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn front_export_marks_dominated_rows() {
    let dir = tmp("front");
    std::fs::write(
        dir.join("pareto_records.csv"),
        "w_mse,mse,occupancy,run_id,seed\n\
         0.1,0.5,0.1,a,0\n\
         0.5,0.3,0.3,b,0\n\
         0.9,0.1,0.5,c,0\n\
         0.7,0.4,0.4,d,0\n",
    )
    .unwrap();
    let out = run_in(&dir, &["front-export"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let front = std::fs::read_to_string(dir.join("front.csv")).unwrap();
    let lines: Vec<&str> = front.lines().collect();
    assert_eq!(lines[0], "w_mse,mse,occupancy,dominated,source");
    // (0.4, 0.4) is dominated by (0.3, 0.3); the others are on the front.
    assert!(lines[1].ends_with("false,sampled"));
    assert!(lines[2].ends_with("false,sampled"));
    assert!(lines[3].ends_with("false,sampled"));
    assert!(lines[4].ends_with("true,sampled"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn pareto_with_zero_iterations_emits_one_record_per_init_weight() {
    let dir = tmp("pareto");
    let gen = [
        "generate", "--seed", "4", "--set", "data.train=4", "--set", "data.val=2",
        "--set", "data.test=2", "--set", "data.frames=6", "--set", "data.height=8",
        "--set", "data.width=8",
    ];
    let pareto = [
        "pareto", "--seed", "4", "--set", "model.hidden=2", "--set", "train.epochs=1",
        "--set", "train.batch=2", "--set", "pareto.iterations=0",
        "--set", "pareto.init_weights=0.1,0.25,0.5,0.75,0.9,1.0",
    ];
    for args in [&gen[..], &pareto[..]] {
        let out = run_in(&dir, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let records = std::fs::read_to_string(dir.join("pareto_records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 6, "header plus six records");
    let curve = std::fs::read_to_string(dir.join("gp_curve.csv")).unwrap();
    assert!(curve.starts_with("w,mean_mse,var_mse,mean_occ,var_occ\n"));
    assert_eq!(curve.lines().count(), 1 + 101);
    std::fs::remove_dir_all(dir).unwrap();
}
