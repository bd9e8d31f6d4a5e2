use std::path::{Path, PathBuf};
use std::process::Command;

use lbdmids::model_io::load_model;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["lbdmids"];
    full.extend_from_slice(args);
    let code = lbdmids_cli::run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "{args:?} failed: {err}");
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// generate + preprocess into `dir`; returns (csv, prep dir).
fn prepared(dir: &Path, schema: &str, counts: &str) -> (PathBuf, PathBuf) {
    prepared_with(dir, schema, counts, "10")
}

fn prepared_with(dir: &Path, schema: &str, counts: &str, timesteps: &str) -> (PathBuf, PathBuf) {
    let csv = dir.join(format!("{schema}.csv"));
    let prep = dir.join(format!("prep-{schema}"));
    ok(&["generate", "--schema", schema, "--counts", counts, "--seed", "7", "--out", p(&csv)]);
    ok(&["preprocess", "--input", p(&csv), "--schema", schema, "--timesteps", timesteps, "--out-dir", p(&prep)]);
    (csv, prep)
}

#[test]
fn generate_writes_requested_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        ok(&["generate", "--schema", "bot_iot", "--counts", "Normal=1000,DDoS=1000", "--seed", "7", "--out", p(out)]);
    }
    let mut rd = csv::Reader::from_path(&a).unwrap();
    assert_eq!(rd.records().count(), 2000);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_out_is_a_usage_error() {
    let status = Command::new(env!("CARGO_BIN_EXE_lbdmids"))
        .args(["generate", "--schema", "bot_iot", "--counts", "Normal=10"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&status.stderr).contains("--out"));
}

#[test]
fn help_documents_defaults() {
    for sub in ["generate", "preprocess", "train", "evaluate", "predict", "report"] {
        let out = ok(&[sub, "--help"]);
        assert!(out.contains("Usage"), "{sub}");
    }
    let out = ok(&["preprocess", "--help"]);
    assert!(out.contains("[default: 0.75]") && out.contains("[default: 10]"));
}

#[test]
fn preprocess_counts_and_fraction_check() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, prep) = prepared(dir.path(), "bot_iot", "Normal=300,DDoS=200");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(prep.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["class_counts"]["Normal"], 300);
    assert_eq!(summary["class_counts"]["DDoS"], 200);
    let tr = summary["train_rows"].as_u64().unwrap();
    let va = summary["validation_rows"].as_u64().unwrap();
    assert_eq!(tr + va, 500);
    assert_eq!(summary["train_windows"].as_u64().unwrap(), tr - 9);
    assert_eq!(summary["validation_windows"].as_u64().unwrap(), va - 9);

    let bad = dir.path().join("bad");
    let (code, _, err) = run(&["preprocess", "--input", p(&csv), "--train-fraction", "1.5", "--out-dir", p(&bad)]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("1.5"));
    assert!(!bad.exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["preprocess", "--input", "/nonexistent/x.csv", "--out-dir", p(dir.path())]);
    assert_eq!(code, 4, "{err}");
}

#[test]
fn train_evaluate_predict_report() {
    let dir = tempfile::tempdir().unwrap();
    // single-row windows of well separated classes: a perfect fixture
    let (csv, prep) = prepared_with(dir.path(), "bot_iot", "Normal=400,DDoS=400", "1");
    let model = dir.path().join("m.lbdm");
    let (code, _, err) = run(&[
        "train",
        "--train",
        p(&prep.join("train.lbdd")),
        "--validation",
        p(&prep.join("validation.lbdd")),
        "--preset",
        "botiot-stacked",
        "--layers",
        "16",
        "--epochs",
        "12",
        "--no-early-stop",
        "--seed",
        "3",
        "--out",
        p(&model),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("batch_size=32"));
    let m = load_model(&model).unwrap();
    // explicit flags win over the preset and are recorded in the header
    assert_eq!(m.config.layer_cells, vec![16]);
    assert_eq!(m.config.seed, 3);
    assert_eq!(m.config.epochs, 12);
    assert_eq!(m.config.learning_rate, 0.002);
    assert_eq!(m.config.early_stop_patience, None);
    let history = std::fs::read_to_string(dir.path().join("m.history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_acc,val_loss,val_acc");
    assert_eq!(lines.len() - 1, 12);

    let report_json = dir.path().join("r.json");
    let table = ok(&[
        "evaluate",
        "--model",
        p(&model),
        "--data",
        p(&prep.join("train.lbdd")),
        "--report-out",
        p(&report_json),
    ]);
    let weighted = table.lines().find(|l| l.starts_with("Weighted avg")).unwrap();
    assert_eq!(weighted.split_whitespace().skip(2).take(3).collect::<Vec<_>>(), ["1.00", "1.00", "1.00"], "{table}");
    assert!(table.contains("ms/sample"));

    let csv_out = ok(&["evaluate", "--model", p(&model), "--data", p(&csv), "--format", "csv"]);
    assert!(csv_out.starts_with("class,precision,recall,f1,support\n"));
    assert!(!csv_out.contains("ms/sample"));
    assert!(csv_out.lines().last().unwrap().starts_with("weighted_avg,"));

    let rerendered = ok(&["report", "--input", p(&report_json)]);
    assert_eq!(rerendered.lines().find(|l| l.starts_with("Weighted avg")).unwrap(), weighted);

    let preds = ok(&["predict", "--model", p(&model), "--data", p(&prep.join("validation.lbdd"))]);
    let header = preds.lines().next().unwrap();
    assert!(header.starts_with("window,predicted,actual,p_Normal,p_DDoS"));
    for line in preds.lines().skip(1) {
        let probs: f64 = line.split(',').skip(3).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((probs - 1.0).abs() < 1e-9);
    }
}

#[test]
fn schema_and_integrity_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, bot) = prepared(dir.path(), "bot_iot", "Normal=100,DDoS=100");
    let (unsw_csv, unsw) = prepared(dir.path(), "unsw_nb15", "Normal=100,Exploits=100");
    let model = dir.path().join("m.lbdm");
    ok(&[
        "train",
        "--train",
        p(&bot.join("train.lbdd")),
        "--validation",
        p(&bot.join("validation.lbdd")),
        "--layers",
        "4",
        "--epochs",
        "1",
        "--learning-rate",
        "0.01",
        "--out",
        p(&model),
    ]);
    for data in [unsw.join("validation.lbdd"), unsw_csv] {
        let (code, _, err) = run(&["evaluate", "--model", p(&model), "--data", p(&data)]);
        assert_eq!(code, 2, "{err}");
        assert!(err.contains("schema"), "{err}");
    }

    let mut bytes = std::fs::read(&model).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    let corrupt = dir.path().join("corrupt.lbdm");
    std::fs::write(&corrupt, bytes).unwrap();
    let (code, _, err) = run(&["evaluate", "--model", p(&corrupt), "--data", p(&bot.join("validation.lbdd"))]);
    assert_eq!(code, 2);
    assert!(err.contains("checksum"), "{err}");

    let (code, _, _) = run(&["evaluate", "--model", "/nonexistent/m.lbdm", "--data", p(&bot.join("validation.lbdd"))]);
    assert_eq!(code, 4);
}

#[test]
fn invalid_training_config_lists_every_problem_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(dir.path(), "bot_iot", "Normal=100,DDoS=100");
    let model = dir.path().join("never.lbdm");
    let (code, _, err) = run(&[
        "train",
        "--train",
        p(&prep.join("train.lbdd")),
        "--validation",
        p(&prep.join("validation.lbdd")),
        "--preset",
        "botiot-bilstm",
        "--layers",
        "4,4",
        "--epochs",
        "0",
        "--out",
        p(&model),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("bidirectional") && err.contains("epochs"), "{err}");
    assert!(!model.exists());
    let (code, _, err) = run(&[
        "train",
        "--train",
        p(&prep.join("train.lbdd")),
        "--validation",
        p(&prep.join("validation.lbdd")),
        "--out",
        p(&model),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("--layers") && err.contains("--epochs") && err.contains("--learning-rate"));
}
