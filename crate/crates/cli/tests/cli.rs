use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shapeboost::synthetic::{train_test, SyntheticConfig};
use shapeboost::{Label, TimeSeries};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shapeboost"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn shapeboost")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "shapeboost {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// UCR text with class names "a" (−1) and "b" (+1).
fn write_ucr(path: &Path, series: &[TimeSeries]) {
    let mut text = String::new();
    for t in series {
        text.push_str(if t.label == Some(Label::Positive) { "b" } else { "a" });
        for v in &t.values {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

struct Fixture {
    dir: TempDir,
    train: PathBuf,
    test: PathBuf,
    model: PathBuf,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = TempDir::new().unwrap();
        let cfg = SyntheticConfig {
            per_class: 8,
            length: 30,
            window: 6,
            seed: 5,
            ..SyntheticConfig::default()
        };
        let (train, test) = train_test(&cfg).unwrap();
        let f = Fixture {
            train: dir.path().join("train.txt"),
            test: dir.path().join("test.txt"),
            model: dir.path().join("model.json"),
            dir,
        };
        write_ucr(&f.train, &train);
        write_ucr(&f.test, &test);
        f
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn train(&self, model: &Path) -> Output {
        ok(&[
            "train",
            "--format",
            "ucr_ts",
            "--data",
            self.train.to_str().unwrap(),
            "--length",
            "6",
            "--sigma",
            "0.05",
            "--kmeans-k",
            "30",
            "--seed",
            "3",
            "--out",
            model.to_str().unwrap(),
            "--history",
            &self.path("history.csv"),
        ])
    }
}

fn training_accuracy(stderr: &[u8]) -> f64 {
    let text = String::from_utf8_lossy(stderr);
    let tail = text.split("training accuracy ").nth(1).expect("accuracy line");
    tail.trim().parse().unwrap()
}

/// Fraction of prediction rows whose truth column equals the predicted column.
fn csv_accuracy(text: &str) -> f64 {
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let hits = rows.iter().filter(|r| r[1] == r[2]).count();
    hits as f64 / rows.len() as f64
}

fn json_number(text: &str, key: &str) -> f64 {
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    v[key].as_f64().unwrap()
}

#[test]
fn train_then_predict_reproduces_training_accuracy() {
    let f = Fixture::new();
    let trained = f.train(&f.model);
    let stored = training_accuracy(&trained.stderr);
    let pred = ok(&[
        "predict",
        "--model",
        f.model.to_str().unwrap(),
        "--format",
        "ucr_ts",
        "--data",
        f.train.to_str().unwrap(),
    ]);
    let text = String::from_utf8(pred.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("index,truth,predicted,margin"));
    assert_eq!(text.lines().count(), 17);
    assert!((csv_accuracy(&text) - stored).abs() < 1e-4);
    let history = fs::read_to_string(f.path("history.csv")).unwrap();
    assert!(history.lines().count() >= 2);
}

#[test]
fn eval_matches_predict_rows() {
    let f = Fixture::new();
    f.train(&f.model);
    let common = [
        "--model",
        f.model.to_str().unwrap(),
        "--format",
        "ucr_ts",
        "--data",
        f.test.to_str().unwrap(),
    ];
    let pred = ok(&[&["predict"], &common[..]].concat());
    let eval = ok(&[&["eval"], &common[..]].concat());
    let report = String::from_utf8(eval.stdout).unwrap();
    let accuracy = json_number(&report, "accuracy");
    let correct = json_number(&report, "correct");
    let total = json_number(&report, "total");
    assert_eq!(total, 16.0);
    assert_eq!(accuracy, correct / total);
    assert_eq!(accuracy, csv_accuracy(&String::from_utf8(pred.stdout).unwrap()));
    assert!(accuracy >= 0.9, "synthetic test accuracy {accuracy}");
}

#[test]
fn training_is_byte_reproducible() {
    let f = Fixture::new();
    let again = f.dir.path().join("again.json");
    f.train(&f.model);
    f.train(&again);
    assert_eq!(fs::read(&f.model).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn report_writes_json_and_csv() {
    let f = Fixture::new();
    f.train(&f.model);
    let shapelets = f.path("shapelets.csv");
    let patterns = f.path("patterns.csv");
    let out = ok(&[
        "report",
        "--model",
        f.model.to_str().unwrap(),
        "--format",
        "ucr_ts",
        "--data",
        f.test.to_str().unwrap(),
        "--item",
        "1",
        "--shapelets-csv",
        &shapelets,
        "--patterns-csv",
        &patterns,
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let sum: f64 = report["shapelets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["value"].as_f64().unwrap())
        .sum();
    assert!((sum - report["margin"].as_f64().unwrap()).abs() < 1e-9);
    assert!(fs::read_to_string(shapelets).unwrap().lines().count() >= 2);
    assert!(fs::read_to_string(patterns).unwrap().lines().count() >= 2);
}

#[test]
fn bag_csv_with_linear_kernel() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bags.csv");
    fs::write(
        &data,
        "bag,label,x,y\n\
         p1,pos,3,0\np1,pos,0,0\n\
         p2,pos,0.2,0.1\np2,pos,2.8,0.1\n\
         n1,neg,-1,0\nn1,neg,-0.5,0.3\n\
         n2,neg,-0.8,0.1\n",
    )
    .unwrap();
    let model = dir.path().join("m.json");
    let d = data.to_str().unwrap();
    let m = model.to_str().unwrap();
    ok(&[
        "train",
        "--format",
        "bag_csv",
        "--data",
        d,
        "--kernel",
        "linear",
        "--kmeans-k",
        "0",
        "--nu",
        "0.5",
        "--out",
        m,
    ]);
    let eval = ok(&["eval", "--model", m, "--format", "bag_csv", "--data", d]);
    let report = String::from_utf8(eval.stdout).unwrap();
    assert_eq!(json_number(&report, "accuracy"), 1.0);
}

#[test]
fn gram_csv_round_trip() {
    let dir = TempDir::new().unwrap();
    let points: [f64; 6] = [3.0, 0.0, 2.9, 0.1, 0.0, 0.2];
    let rows: Vec<String> = points
        .iter()
        .map(|a| {
            points
                .iter()
                .map(|b| format!("{}", (-(a - b) * (a - b)).exp()))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    let gram = dir.path().join("gram.csv");
    let index = dir.path().join("index.csv");
    fs::write(&gram, rows.join("\n")).unwrap();
    fs::write(&index, "0,a,1\n1,a,1\n2,b,1\n3,b,1\n4,c,0\n5,d,0\n").unwrap();
    let model = dir.path().join("m.json");
    let common = [
        "--format",
        "gram_csv",
        "--data",
        gram.to_str().unwrap(),
        "--index",
        index.to_str().unwrap(),
    ];
    ok(&[
        &["train"],
        &common[..],
        &[
            "--kernel",
            "precomputed",
            "--kmeans-k",
            "0",
            "--nu",
            "0.5",
            "--out",
            model.to_str().unwrap(),
        ],
    ]
    .concat());
    let eval = ok(&[&["eval", "--model", model.to_str().unwrap()], &common[..]].concat());
    assert_eq!(json_number(&String::from_utf8(eval.stdout).unwrap(), "accuracy"), 1.0);
}

#[test]
fn cv_single_cell_table() {
    let f = Fixture::new();
    let table = f.path("cv.csv");
    ok(&[
        "cv",
        "--format",
        "ucr_ts",
        "--data",
        f.train.to_str().unwrap(),
        "--length-fracs",
        "0.2",
        "--nus",
        "0.2",
        "--sigmas",
        "0.05",
        "--kmeans-k",
        "20",
        "--folds",
        "2",
        "--repeats",
        "1",
        "--out",
        &table,
    ]);
    let text = fs::read_to_string(table).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn predict_without_model_is_a_usage_error() {
    let f = Fixture::new();
    let out = run(&["predict", "--format", "ucr_ts", "--data", f.test.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = run(&["train", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn missing_data_file_fails_with_context() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = run(&[
        "train",
        "--format",
        "ucr_ts",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
}

#[test]
fn three_labels_need_a_mapping() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("three.txt");
    fs::write(&data, "1 0 1 2 3\n2 1 2 3 4\n3 2 3 4 5\n1 0 1 2 2\n").unwrap();
    let model = dir.path().join("m.json");
    let d = data.to_str().unwrap();
    let m = model.to_str().unwrap();
    let base = [
        "train",
        "--format",
        "ucr_ts",
        "--data",
        d,
        "--length",
        "2",
        "--kmeans-k",
        "0",
        "--out",
        m,
    ];
    assert!(!run(&base).status.success());
    ok(&[&base[..], &["--positive-label", "1"]].concat());
    let pred = ok(&["predict", "--model", m, "--format", "ucr_ts", "--data", d]);
    assert_eq!(String::from_utf8(pred.stdout).unwrap().lines().count(), 5);
}
