use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geocp::data::{read_dataset, Split};
use geocp::model::ingest_logits;
use geocp::CyclicGroup;

fn geocp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geocp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_DATA: &str = r#""data": {"num_classes": 3, "train_count": 150, "canon_train_count": 150,
    "cal_count": 40, "test_count": 30},
  "predictor": {"architecture": {"kind": "softmax-linear"}, "train": {"epochs": 2}}"#;

#[test]
fn help_lists_every_subcommand() {
    let out = geocp(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "gen-data",
        "train-predictor",
        "train-canon",
        "export-logits",
        "run-robustness",
        "run-group-map",
        "run-double-shift",
        "run-coverage-sanity",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write_config(
        dir.path(),
        "typo.json",
        r#"{"study":"coverage-sanity","alhpa":0.1}"#,
    );
    let out = geocp(&["run-coverage-sanity", "--config", &typo]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("alhpa"));

    let other = write_config(dir.path(), "other.json", r#"{"study":"robustness"}"#);
    assert_eq!(
        code(&geocp(&["run-coverage-sanity", "--config", &other])),
        2
    );

    let bad_alpha = write_config(
        dir.path(),
        "alpha.json",
        r#"{"study":"coverage-sanity","alpha":1.0}"#,
    );
    assert_eq!(
        code(&geocp(&["run-coverage-sanity", "--config", &bad_alpha])),
        2
    );
    assert_eq!(code(&geocp(&["run-coverage-sanity", "--trials", "0"])), 2);
}

#[test]
fn missing_files_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let out = geocp(&["run-coverage-sanity", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}

#[test]
fn divergent_training_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "diverge.json",
        r#"{"study":"robustness",
            "data": {"num_classes": 3, "train_count": 60},
            "predictor": {"train": {"epochs": 2, "learning_rate": 1e300}}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = geocp(&[
        "train-predictor",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn data_models_and_logits_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "small.json",
        &format!(
            r#"{{"study":"group-map", "group": 4,
              "test_shift": {{"variant":"dirac","elements":[1,2,3]}},
              "canonicalizer": {{"architecture": {{"kind": "softmax-linear"}}, "train": {{"epochs": 2}}}},
              {SMALL_DATA}}}"#
        ),
    );
    let out_dir = dir.path().join("out");
    let out = out_dir.to_str().unwrap();
    for cmd in ["gen-data", "train-predictor", "train-canon"] {
        let o = geocp(&[cmd, "--config", &cfg, "--out", out]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "train.cp2t",
        "canon_train.cp2t",
        "cal.cp2t",
        "test.cp2t",
        "predictor.json",
        "cn4.json",
    ] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let test = read_dataset(&out_dir.join("test.cp2t"), Split::Test, CyclicGroup::C4).unwrap();
    assert_eq!(test.len(), 30);
    let shifted = test.iter().find(|s| s.label == 2).unwrap();
    assert_eq!(shifted.true_pose.unwrap().index(), 3);

    let o = geocp(&[
        "export-logits",
        "--config",
        &cfg,
        "--out",
        out,
        "--model",
        out_dir.join("predictor.json").to_str().unwrap(),
        "--data",
        out_dir.join("test.cp2t").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let frozen = ingest_logits(&out_dir.join("logits.cp2l")).unwrap();
    assert_eq!(frozen.num_classes(), 3);
    assert_eq!(frozen.len(), 30);

    // truncated dataset: structured parse error, I/O exit code
    let bytes = fs::read(out_dir.join("test.cp2t")).unwrap();
    let cut = dir.path().join("cut.cp2t");
    fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let o = geocp(&[
        "export-logits",
        "--out",
        out,
        "--model",
        out_dir.join("predictor.json").to_str().unwrap(),
        "--data",
        cut.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte offset"));
}

#[test]
fn single_trial_rerun_matches_batch() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch");
    let single = dir.path().join("single");
    let o = geocp(&[
        "run-coverage-sanity",
        "--out",
        batch.to_str().unwrap(),
        "--seed",
        "5",
        "--trials",
        "3",
        "--threads",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("coverage-sanity\tscp"));
    let o = geocp(&[
        "run-coverage-sanity",
        "--out",
        single.to_str().unwrap(),
        "--seed",
        "7",
        "--trials",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    let a = fs::read_to_string(batch.join("coverage-sanity/trials/trial_0002.csv")).unwrap();
    let b = fs::read_to_string(single.join("coverage-sanity/trials/trial_0000.csv")).unwrap();
    let body = |s: &str| -> Vec<String> {
        s.lines()
            .skip(1)
            .map(|l| l.split_once(',').unwrap().1.to_string())
            .collect()
    };
    assert_eq!(body(&a), body(&b));
    let manifest = fs::read_to_string(batch.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"base_seed\": 5"));
}

#[test]
fn robustness_run_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rob.json",
        &format!(
            r#"{{"study":"robustness", "trials": 2,
              "robustness": {{"cn_groups": [4], "shift_groups": [1, 4]}},
              "canonicalizer": {{"architecture": {{"kind": "softmax-linear"}}, "train": {{"epochs": 2}}}},
              {SMALL_DATA}}}"#
        ),
    );
    let out_dir = dir.path().join("out");
    let o = geocp(&[
        "run-robustness",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "base/results.csv",
        "cn4/results.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
}
