use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn msf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msf")).args(args).output().expect("run msf")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = "image_size = 16\nepochs = 3\ndecay_epoch = 2\nlr_initial = 0.05\nlr_final = 0.005\nfolds = 2\n";

fn textures(dir: &Path, n: usize) -> PathBuf {
    let data = dir.join("textures");
    stdout_json(&msf(&["synth", "textures", "--n", &n.to_string(), "--size", "16", "--out", p(&data)]));
    data
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn synth_textures_writes_the_layout_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        stdout_json(&msf(&["synth", "textures", "--n", "3", "--size", "16", "--seed", "4", "--out", p(out)]));
    }
    let images = std::fs::read_dir(a.join("images")).unwrap().count();
    assert_eq!(images, 6);
    let labels = std::fs::read_to_string(a.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 7);
    assert_eq!(labels, std::fs::read_to_string(b.join("labels.csv")).unwrap());
    let first = labels.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let img = |root: &Path| std::fs::read(root.join("images").join(format!("{first}.img8"))).unwrap();
    assert_eq!(img(&a), img(&b));
}

#[test]
fn default_schedule_logs_one_line_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sbm");
    stdout_json(&msf(&["synth", "sbm", "--nodes", "20", "--out", p(&data)]));
    let cfg = write_config(dir.path(), "gcn.cfg", "gnn_hidden = 16\n");
    let out = dir.path().join("run");
    let summary = stdout_json(&msf(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&out)]));
    assert_eq!(summary["epochs"], 100);
    assert_eq!(summary["train_size"], 32);
    assert_eq!(summary["test_size"], 8);
    let log = lines(&out.join("train_log.jsonl"));
    assert_eq!(log.len(), 101);
    assert_eq!(log[0]["cv"]["fold_accuracies"].as_array().unwrap().len(), 5);
    assert_eq!(log[1]["lr"], 0.001);
    assert_eq!(log[100]["lr"], 0.0001);
    for (i, l) in log[1..].iter().enumerate() {
        assert_eq!(l["epoch"], i);
        assert!(l["loss"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "epochs = 3\nlearning_rate = 0.1\n");
    let out = msf(&["train", "--config", p(&cfg), "--data", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn missing_data_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = msf(&["train", "--data", p(&dir.path().join("nowhere")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diverging_run_exits_with_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = textures(dir.path(), 10);
    let cfg = write_config(
        dir.path(),
        "huge.cfg",
        "image_size = 16\nepochs = 3\ndecay_epoch = 2\nlr_initial = 1e300\nlr_final = 1e299\nfolds = 2\n",
    );
    let out = msf(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = textures(dir.path(), 10);
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let run = dir.path().join("run");
    let summary = stdout_json(&msf(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run)]));
    let ckpt = run.join("checkpoint.msfc");
    let log = lines(&run.join("train_log.jsonl"));
    let final_acc = log.last().unwrap()["acc"].as_f64().unwrap();

    let eval = |split: &str| {
        stdout_json(&msf(&[
            "eval", "--config", p(&cfg), "--checkpoint", p(&ckpt), "--data", p(&data), "--split", split,
        ]))
    };
    let train = eval("train");
    assert!((train["accuracy"].as_f64().unwrap() - final_acc).abs() <= 1e-9);
    assert_eq!(train["n"], 16);
    let test = eval("test");
    assert!((test["accuracy"].as_f64().unwrap() - summary["test_accuracy"].as_f64().unwrap()).abs() <= 1e-9);
    assert_eq!(eval("all")["n"], 20);

    let ap: Vec<f64> = test["ap"].as_array().unwrap().iter().filter_map(Value::as_f64).collect();
    let mean = ap.iter().sum::<f64>() / ap.len() as f64;
    assert!((test["map"].as_f64().unwrap() - mean).abs() <= 1e-12);
    assert_eq!(test["classes"], serde_json::json!(["coarse", "fine"]));
}

#[test]
fn single_scale_model_trains_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let data = textures(dir.path(), 10);
    let cfg = write_config(dir.path(), "plain.cfg", &format!("{SMALL}scales = 1\nfusion_weights = 1\nppm_levels =\n"));
    let run = dir.path().join("run");
    stdout_json(&msf(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run)]));
    let report = stdout_json(&msf(&[
        "eval",
        "--config",
        p(&cfg),
        "--checkpoint",
        p(&run.join("checkpoint.msfc")),
        "--data",
        p(&data),
    ]));
    assert_eq!(report["n"], 4);

    // the default config has a different parameter layout
    let out = msf(&["eval", "--checkpoint", p(&run.join("checkpoint.msfc")), "--data", p(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn gradcheck_scope_and_injected_bug() {
    let table = stdout_json(&msf(&["gradcheck", "gcn"]));
    let checks = table["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0]["name"], "gcn");
    assert_eq!(checks[0]["passed"], true);

    let out = msf(&["gradcheck", "dense", "--inject-bug"]);
    assert_eq!(out.status.code(), Some(1));
    let table: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = table["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"dense_injected_bug"), "{names:?}");

    assert_eq!(msf(&["gradcheck", "no_such_layer"]).status.code(), Some(2));
}
