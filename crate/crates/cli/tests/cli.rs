use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stlearn"))
        .args(args)
        .env_remove("STLEARN_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_lasso_config(dir: &Path) -> String {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        r#"{"experiment": "lasso-divergence", "d_x": [200, 400], "lambdas": [0.001, 0.01, 0.1, 1.0]}"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_exits_zero() {
    let o = stlearn(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["synth", "train-linear", "train-relu", "lasso", "oracle", "exp"] {
        assert!(text.contains(sub), "missing {sub} in help");
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = stlearn(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_experiment_lists_valid_ids() {
    let o = stlearn(&["exp", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("regime-grid"), "{}", stderr(&o));
}

#[test]
fn bad_config_key_lists_valid_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"d_x": 50, "lamda": 0.1}"#).unwrap();
    let o = stlearn(&["lasso", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    let v: serde_json::Value = serde_json::from_str(err.trim()).expect("error is JSON");
    assert_eq!(v["error"]["kind"], "config");
    let msg = v["error"]["message"].as_str().unwrap();
    assert!(msg.contains("lamda") && msg.contains("valid keys") && msg.contains("lambda"), "{msg}");
}

#[test]
fn override_with_wrong_type_is_a_config_error() {
    let o = stlearn(&["exp", "theorem-oracles", "--set", "max_steps=\"many\"", "--print-config"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn print_config_shows_overrides_and_seed() {
    let o = stlearn(&["exp", "decomposition", "--set", "g=[1,2]", "--seed", "10", "--print-config"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["g"], serde_json::json!([1, 2]));
    assert_eq!(v["seeds"], serde_json::json!([10, 11, 12, 13, 14]));
}

#[test]
fn experiment_writes_tables_figures_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_lasso_config(dir.path());
    let out = dir.path().join("out");
    let o = stlearn(&["exp", "lasso-divergence", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["lasso_divergence.csv", "lasso_divergence_seeds.csv", "lasso_divergence.svg", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("lasso_divergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "lasso-divergence");
    assert_eq!(manifest["config"]["d_x"], serde_json::json!([200, 400]));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_lasso_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = stlearn(&["exp", "lasso-divergence", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn synth_then_train_linear_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = stlearn(&["synth", "--out", data.to_str().unwrap(), "--set", "d_x=6", "--set", "n_s=20", "--set", "d_y=2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(data.join("dataset.bin").is_file() && data.join("truth.json").is_file());

    let train = dir.path().join("train");
    let stem = data.join("dataset");
    let o = stlearn(&[
        "train-linear",
        "--out",
        train.to_str().unwrap(),
        "--set",
        &format!("dataset=\"{}\"", stem.display()),
        "--set",
        "max_steps=20000",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(train.join("summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
    assert!(train.join("trace.csv").is_file());
}

#[test]
fn zero_workers_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_stlearn"))
        .args(["oracle", "--print-config"])
        .env("STLEARN_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
