use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = r#"
[data]
path = "table5.csv"
label_column = "Label"
target_class = "1"
features = [
    { name = "CPU", kind = "continuous" },
    { name = "MEM", kind = "continuous" },
]

[discretization]
cuts = { CPU = [81, 95], MEM = [85] }

[ensemble]
n_estimators = 1
n_features = 2

[selection]
alpha = 1.0
"#;

const TABLE5: &str = "CPU,MEM,Label\n95,10,1\n80,10,0\n81,85,1\n10,85,0\n10,10,0\n82,10,0\n85,10,0\n81,10,0\n";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
        fs::write(dir.path().join("table5.csv"), TABLE5).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_rulelattice"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn train(&self) -> PathBuf {
        let out = self.run(&[
            "train",
            "--config",
            "run.toml",
            "--model",
            "model.json",
            "--log",
            "train.log",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        self.path("model.json")
    }
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_prints_the_rule_set_and_logs_selection() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "train",
        "--config",
        "run.toml",
        "--model",
        "model.json",
        "--log",
        "train.log",
    ]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        "IF CPU ∈ [95, max)\nOR CPU ∈ [81, max) and MEM ∈ [85, max)\nTHEN Label = 1\nELSE Label = 0\n"
    );
    let log = fs::read_to_string(ws.path("train.log")).unwrap();
    assert!(log.starts_with("config_sha256="));
    assert!(log.contains("candidates before filtering=2"));
    assert!(log.contains("candidates after filtering=2"));
    assert!(log.contains("select iter=2 rule=10010"));
}

#[test]
fn predict_reproduces_the_label_column() {
    let ws = Workspace::new();
    let model = ws.train();
    let out = ws.run(&["predict", "--model", model.to_str().unwrap(), "--data", "table5.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let expect = "row_id,prediction,fired_rules\n\
                  0,1,0\n1,0,\n2,1,1\n3,0,\n4,0,\n5,0,\n6,0,\n7,0,\n";
    assert_eq!(stdout(&out), expect);
}

#[test]
fn predict_on_an_empty_file_prints_nothing() {
    let ws = Workspace::new();
    let model = ws.train();
    fs::write(ws.path("empty.csv"), "").unwrap();
    let out = ws.run(&["predict", "--model", model.to_str().unwrap(), "--data", "empty.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "");
}

#[test]
fn predict_on_a_header_only_file_prints_the_header() {
    let ws = Workspace::new();
    let model = ws.train();
    fs::write(ws.path("header.csv"), "CPU,MEM\n").unwrap();
    let out = ws.run(&["predict", "--model", model.to_str().unwrap(), "--data", "header.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "row_id,prediction,fired_rules\n");
}

#[test]
fn wrong_model_version_is_a_data_error() {
    let ws = Workspace::new();
    let model = ws.train();
    let text = fs::read_to_string(&model)
        .unwrap()
        .replace("\"version\": 1", "\"version\": 99");
    fs::write(&model, text).unwrap();
    let out = ws.run(&["predict", "--model", model.to_str().unwrap(), "--data", "table5.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("model:"), "{}", stderr(&out));
}

#[test]
fn missing_column_is_named() {
    let ws = Workspace::new();
    let model = ws.train();
    fs::write(ws.path("partial.csv"), "CPU\n95\n").unwrap();
    let out = ws.run(&["predict", "--model", model.to_str().unwrap(), "--data", "partial.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("MEM"), "{}", stderr(&out));
}

#[test]
fn invalid_alpha_fails_before_reading_data() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "train",
        "--config",
        "run.toml",
        "--alpha",
        "1.5",
        "--data",
        "does-not-exist.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("alpha"), "{}", stderr(&out));
    assert!(!ws.path("model.json").exists());
}

#[test]
fn too_many_features_per_estimator_is_rejected() {
    let ws = Workspace::new();
    let out = ws.run(&["eval", "--config", "run.toml", "--n-features", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("n_features"), "{}", stderr(&out));
}

#[test]
fn bench_writes_one_row_per_combination() {
    let ws = Workspace::new();
    let cfg = format!("{CONFIG}\n[bench]\nsizes = [200, 400]\nfeatures = [2, 3]\nratios = [0.2]\nrepeats = 1\n");
    fs::write(ws.path("bench.toml"), cfg).unwrap();
    let out = ws.run(&["bench", "--config", "bench.toml", "--table", "bench.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(ws.path("bench.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4);
}

#[test]
fn synth_then_eval_runs_quickly() {
    let ws = Workspace::new();
    let start = std::time::Instant::now();
    let out = ws.run(&[
        "synth",
        "--n-records",
        "10000",
        "--n-features",
        "10",
        "--ratio",
        "0.1",
        "--seed",
        "3",
        "--output",
        "synth.csv",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let header = fs::read_to_string(ws.path("synth.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let features: Vec<String> = header
        .split(',')
        .filter(|c| *c != "label")
        .map(|c| format!("{{ name = \"{c}\", kind = \"continuous\" }}"))
        .collect();
    let cfg = format!(
        "[data]\npath = \"synth.csv\"\nlabel_column = \"label\"\ntarget_class = \"1\"\nfeatures = [{}]\n[ensemble]\nn_estimators = 10\n",
        features.join(", ")
    );
    fs::write(ws.path("synth.toml"), cfg).unwrap();
    let out = ws.run(&[
        "eval",
        "--config",
        "synth.toml",
        "--report",
        "report.json",
        "--table",
        "folds.csv",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(start.elapsed().as_secs() < 120);
    let table = fs::read_to_string(ws.path("folds.csv")).unwrap();
    assert_eq!(
        table.lines().next().unwrap(),
        "dataset,fold,f1,precision,recall,n_rules,mean_atoms,t_gen,t_sel"
    );
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.path("report.json")).unwrap()).unwrap();
    assert!(report["config_sha256"].is_string());
}

#[test]
fn commands_leave_inputs_untouched() {
    let ws = Workspace::new();
    let before = fs::read(ws.path("table5.csv")).unwrap();
    let model = ws.train();
    let model_bytes = fs::read(&model).unwrap();
    ws.run(&["predict", "--model", "model.json", "--data", "table5.csv"]);
    ws.run(&["eval", "--config", "run.toml", "--folds", "2"]);
    assert_eq!(fs::read(ws.path("table5.csv")).unwrap(), before);
    assert_eq!(fs::read(Path::new(&model)).unwrap(), model_bytes);
    assert_eq!(fs::read_to_string(ws.path("run.toml")).unwrap(), CONFIG);
}
