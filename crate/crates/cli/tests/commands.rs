mod common;

use std::fs;

use common::{p, run, run_ok, stdout, trained};
use hallglove::dataset::read_csv;
use hallglove::export::{export_firmware_arrays, import_binary};

#[test]
fn gen_default_row_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["gen", "--out", "a.csv"]);
    run_ok(dir.path(), &["gen", "--out", "b.csv"]);
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 2201);
    assert!(dir.path().join("a.csv.manifest.json").exists());
    run_ok(dir.path(), &["gen", "--seed", "7", "--out", "c.csv"]);
    assert_ne!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("c.csv")).unwrap()
    );
}

#[test]
fn gen_missing_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen", "--config", "nope.toml", "--out", "x.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn gen_unwritable_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen", "--out", "missing/dir/x.csv"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn config_file_controls_generation() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 3\n[generate]\nsubjects = 2\nreps = 3\n",
    )
    .unwrap();
    run_ok(dir.path(), &["gen", "--config", "run.toml", "--out", "d.csv"]);
    let text = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 11 * 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("d.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["run"]["generate"]["reps"], 3);
}

#[test]
fn train_outputs_and_report() {
    let t = trained();
    let bytes = fs::read(t.weights()).unwrap();
    let params = import_binary(&bytes).unwrap();
    assert_eq!((params.n_in, params.n_hidden, params.n_out), (20, 24, 11));
    let header = fs::read_to_string(t.dir.join("model.h")).unwrap();
    assert_eq!(header, export_firmware_arrays(&params).unwrap());
    let report = t.report();
    assert!(report["val_accuracy"].as_f64().unwrap() >= 0.96);
    let epochs = report["epochs"].as_array().unwrap().len();
    assert!(epochs <= report["max_epochs"].as_u64().unwrap() as usize);
    assert_eq!(report["stopped_epoch"].as_u64().unwrap() as usize, epochs);
    assert!(t.dir.join("model.glvw.manifest.json").exists());
}

#[test]
fn train_rejects_degenerate_dataset() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(t.dataset()).unwrap();
    // Only class 0 rows remain.
    let single: String = text
        .lines()
        .filter(|l| l.starts_with("subject") || l.split(',').nth(1) == Some("0"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(dir.path().join("one.csv"), single).unwrap();
    let out = run(dir.path(), &["train", "one.csv", "--out", "m.glvw"]);
    assert!(!out.status.success());
    assert!(!dir.path().join("m.glvw").exists());

    fs::write(dir.path().join("empty.csv"), "").unwrap();
    assert!(!run(dir.path(), &["train", "empty.csv"]).status.success());
}

#[test]
fn eval_reproduces_training_report() {
    let t = trained();
    let out = run_ok(
        &t.dir,
        &["eval", "data.csv", "model.glvw", "--format", "machine"],
    );
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["accuracy"], t.report()["val_accuracy"]);
    let confusion: Vec<Vec<u64>> = serde_json::from_value(v["confusion"].clone()).unwrap();
    let trace: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    let total: u64 = confusion.iter().flatten().sum();
    assert_eq!(trace as f64 / total as f64, v["accuracy"].as_f64().unwrap());
    assert_eq!(total, 440);
}

#[test]
fn eval_per_subject() {
    let t = trained();
    let out = run_ok(
        &t.dir,
        &["eval", "data.csv", "model.glvw", "--split", "loso", "--format", "machine"],
    );
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let subjects = v["subjects"].as_array().unwrap();
    assert_eq!(subjects.len(), 5);
    for s in subjects {
        assert_eq!(s["total"], 440);
    }
}

#[test]
fn eval_dimension_mismatch() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    // Ten-gesture vocabulary: the 11-output weights no longer fit.
    let vocab = hallglove::hand::DEFAULT_VOCABULARY;
    let cut = vocab.rfind("[[gesture]]").unwrap();
    fs::write(dir.path().join("vocab.toml"), &vocab[..cut]).unwrap();
    fs::write(dir.path().join("run.toml"), "[models]\nvocabulary = \"vocab.toml\"\n").unwrap();
    let out = run(
        dir.path(),
        &["--config", "run.toml", "eval", p(&t.dataset()), p(&t.weights())],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}

#[test]
fn export_round_trip_between_forms() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["export", p(&t.weights()), "--out", "w.h"]);
    run_ok(dir.path(), &["export", "w.h", "--out", "w.glvw"]);
    assert_eq!(
        fs::read(dir.path().join("w.glvw")).unwrap(),
        fs::read(t.weights()).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("w.h")).unwrap(),
        fs::read(t.dir.join("model.h")).unwrap()
    );
}

#[test]
fn csv_written_by_gen_reads_back() {
    let t = trained();
    let d = read_csv(fs::read(t.dataset()).unwrap().as_slice(), 11).unwrap();
    assert_eq!(d.len(), 2200);
    assert_eq!(d.subjects().len(), 5);
}
