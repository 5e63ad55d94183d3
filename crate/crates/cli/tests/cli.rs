use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dartnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dartnet")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `dir` with its contents.
fn snapshot_dir(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.clone(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn small_dataset(root: &Path) -> PathBuf {
    let data = root.join("data");
    let out = dartnet(&["generate", "--out", p(&data), "--seed", "3", "--entities", "6", "--relations", "2", "--ticks", "30"]);
    let sidecar = stdout_json(&out);
    assert!(sidecar.is_object());
    assert!(data.join("events.tsv").exists());
    data
}

const TINY: [&str; 10] = ["--epochs", "3", "--hidden-dim", "4", "--embed-dim", "3", "--seq-len", "3", "--lr", "0.01"];

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dartnet(&["train", "--data", p(dir.path()), "--out", p(&dir.path().join("o")), "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("dartnet: error[usage]:"), "{err}");
    assert!(err.contains("Usage:"), "{err}");
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dartnet(&["eval", "--data", p(&dir.path().join("nope")), "--checkpoint", p(&dir.path().join("c.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["train", "--data", p(&data), "--out", p(&out_dir), "--seed", "11"];
        args.extend(TINY);
        stdout_json(&dartnet(&args))
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a["sha256"], b["sha256"]);
    assert!(a["sha256"].as_str().unwrap().len() == 64);
    let bytes = |v: &Value| std::fs::read(v["checkpoint"].as_str().unwrap()).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
}

#[test]
fn eval_and_forecast_leave_data_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let before = snapshot_dir(&data);

    let ckdir = dir.path().join("ck");
    let mut args = vec!["train", "--data", p(&data), "--out", p(&ckdir)];
    args.extend(TINY);
    let summary = stdout_json(&dartnet(&args));
    let ck = summary["checkpoint"].as_str().unwrap().to_string();

    let report_dir = dir.path().join("report");
    let report = stdout_json(&dartnet(&["eval", "--data", p(&data), "--checkpoint", &ck, "--out", p(&report_dir)]));
    assert!(report["attribute_mse"].as_f64().unwrap().is_finite());
    assert_eq!(report["meta"]["checkpoint_hash"], summary["sha256"]);
    assert!(report_dir.join("report.json").exists());
    assert!(report_dir.join("per_entity.csv").exists());

    let fc = dir.path().join("fc");
    let out = dartnet(&["forecast", "--data", p(&data), "--checkpoint", &ck, "--out", p(&fc), "--horizon", "3", "--top-k", "2"]);
    assert_eq!(stdout_json(&out)["steps"], 3);
    let tsv = std::fs::read_to_string(fc.join("forecast.tsv")).unwrap();
    assert!(tsv.lines().next().unwrap().contains("predicted=true"));
    let attrs: BTreeMap<String, Vec<Value>> =
        serde_json::from_str(&std::fs::read_to_string(fc.join("forecast_attributes.json")).unwrap()).unwrap();
    assert!(!attrs.is_empty());
    assert!(attrs.values().all(|steps| steps.len() <= 3 && steps.iter().all(|s| s["value"].is_array())));

    // Writing into the dataset directory is refused.
    let out = dartnet(&["forecast", "--data", p(&data), "--checkpoint", &ck, "--out", p(&data.join("x"))]);
    assert_eq!(out.status.code(), Some(1));

    assert_eq!(snapshot_dir(&data), before);
}

#[test]
fn ablate_prints_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let table_dir = dir.path().join("ablation");
    let mut args = vec!["ablate", "--data", p(&data), "--seeds", "2", "--out", p(&table_dir)];
    args.extend(TINY);
    let out = dartnet(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "variant\tmse_seed0\tmse_seed1\tmse_median");
    assert_eq!(lines.len(), 5);
    let variants: Vec<&str> = lines[1..].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(variants, ["full", "decoupled", "shared_history", "time_independent"]);
    assert_eq!(std::fs::read_to_string(table_dir.join("ablation.tsv")).unwrap(), text);
}
