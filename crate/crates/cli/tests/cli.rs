use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ldfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldfa")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ldfa(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three small well-separated clusters in 4-D, with labels.
fn blobs(dir: &TempDir) -> (PathBuf, PathBuf) {
    let mut rows = String::new();
    let mut labels = String::new();
    for c in 0..3 {
        for i in 0..15 {
            let jitter = |k: usize| ((i * 7 + k * 3 + c) % 11) as f64 * 0.05;
            let mut v = [jitter(0), jitter(1), jitter(2), jitter(3)];
            v[c] += 5.0;
            rows += &format!("{},{},{},{}\n", v[0], v[1], v[2], v[3]);
            labels += &format!("class{c}\n");
        }
    }
    let x = dir.path().join("x.csv");
    let l = dir.path().join("labels.txt");
    std::fs::write(&x, rows).unwrap();
    std::fs::write(&l, labels).unwrap();
    (x, l)
}

fn small_config(dir: &TempDir) -> PathBuf {
    let p = dir.path().join("cfg.txt");
    std::fs::write(&p, "k=5\nwidths=4,3,2\nd=2\npretrain_epochs=20\nfinetune_epochs=10\nalign_epochs=50\nlearning_rate=0.5\n").unwrap();
    p
}

#[test]
fn pca_fit_then_transform_of_training_file_matches() {
    let dir = TempDir::new().unwrap();
    let (x, _) = blobs(&dir);
    let (model, emb, again) = (dir.path().join("m.ldfa"), dir.path().join("e.csv"), dir.path().join("t.csv"));
    ok(&["fit", "--input", s(&x), "--mode", "pca", "--model", s(&model), "--output", s(&emb)]);
    ok(&["transform", "--model", s(&model), "--input", s(&x), "--output", s(&again)]);
    let a = std::fs::read_to_string(&emb).unwrap();
    assert_eq!(a.lines().count(), 45);
    assert_eq!(a, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn ldfa_fit_is_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let (x, _) = blobs(&dir);
    let cfg = small_config(&dir);
    let mut archives = Vec::new();
    for threads in ["1", "3"] {
        let model = dir.path().join(format!("m{threads}.ldfa"));
        let emb = dir.path().join(format!("e{threads}.csv"));
        ok(&["fit", "--input", s(&x), "--config", s(&cfg), "--seed", "7", "--threads", threads, "--model", s(&model), "--output", s(&emb)]);
        archives.push((std::fs::read(&model).unwrap(), std::fs::read(&emb).unwrap()));
    }
    assert_eq!(archives[0], archives[1]);

    let out = dir.path().join("oos.csv");
    ok(&["transform", "--model", s(&dir.path().join("m1.ldfa")), "--input", s(&x), "--output", s(&out), "--threads", "2"]);
    assert_eq!(std::fs::read_to_string(out).unwrap().lines().count(), 45);
}

#[test]
fn transform_edge_cases() {
    let dir = TempDir::new().unwrap();
    let (x, _) = blobs(&dir);
    let model = dir.path().join("m.ldfa");
    ok(&["fit", "--input", s(&x), "--mode", "pca", "--model", s(&model)]);

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = dir.path().join("out.csv");
    ok(&["transform", "--model", s(&model), "--input", s(&empty), "--output", s(&out)]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");

    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "1,2,3\n").unwrap();
    let res = ldfa(&["transform", "--model", s(&model), "--input", s(&wrong), "--output", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("expects 4"));
}

#[test]
fn ltsa_model_has_no_transform() {
    let dir = TempDir::new().unwrap();
    let (x, _) = blobs(&dir);
    let model = dir.path().join("m.ldfa");
    ok(&["fit", "--input", s(&x), "--mode", "ltsa", "--model", s(&model)]);
    let res = ldfa(&["transform", "--model", s(&model), "--input", s(&x), "--output", s(&dir.path().join("o.csv"))]);
    assert!(!res.status.success());
}

#[test]
fn evaluate_emits_one_row_per_seed() {
    let dir = TempDir::new().unwrap();
    let (x, l) = blobs(&dir);
    let (model, emb) = (dir.path().join("m.ldfa"), dir.path().join("e.csv"));
    ok(&["fit", "--input", s(&x), "--mode", "pca", "--model", s(&model), "--output", s(&emb)]);

    let out = ok(&["evaluate", "--input", s(&emb), "--labels", s(&l), "--metrics", "cluster"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,value,seed");
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[1], "purity,1,0");
    assert_eq!(lines[10], "purity,1,9");

    let report = dir.path().join("r.csv");
    ok(&["evaluate", "--input", s(&emb), "--labels", s(&l), "--metrics", "classify", "--seed", "5", "--runs", "3", "--output", s(&report)]);
    let text = std::fs::read_to_string(report).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "knn_accuracy,1,5");
    assert_eq!(text.lines().count(), 4);

    assert!(!ldfa(&["evaluate", "--input", s(&emb), "--labels", s(&l), "--metrics", "regress"]).status.success());
}

#[test]
fn visualize_writes_svg_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let (x, l) = blobs(&dir);
    let (model, emb) = (dir.path().join("m.ldfa"), dir.path().join("e.csv"));
    ok(&["fit", "--input", s(&x), "--mode", "pca", "--model", s(&model), "--output", s(&emb)]);
    let svg = dir.path().join("plot.svg");
    ok(&["visualize", "--input", s(&emb), "--labels", s(&l), "--output", s(&svg)]);
    let first = std::fs::read(&svg).unwrap();
    assert!(String::from_utf8_lossy(&first).matches("<text").count() == 3);
    let sidecar = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    let emb_text = std::fs::read_to_string(&emb).unwrap();
    for (plotted, row) in sidecar.lines().skip(1).zip(emb_text.lines()) {
        assert!(plotted.starts_with(row));
    }
    ok(&["visualize", "--input", s(&emb), "--labels", s(&l), "--output", s(&svg)]);
    assert_eq!(std::fs::read(&svg).unwrap(), first);

    let one_d = dir.path().join("one.csv");
    std::fs::write(&one_d, emb_text.lines().map(|r| r.split(',').next().unwrap().to_string() + "\n").collect::<String>()).unwrap();
    let res = ldfa(&["visualize", "--input", s(&one_d), "--labels", s(&l), "--output", s(&svg)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("d >= 2"));
}

#[test]
fn bad_inputs_are_reported() {
    let dir = TempDir::new().unwrap();
    let (x, _) = blobs(&dir);
    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "k=5\ncolour=blue\n").unwrap();
    let res = ldfa(&["fit", "--input", s(&x), "--config", s(&cfg), "--model", s(&dir.path().join("m"))]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    let res = ldfa(&["fit", "--input", s(&ragged), "--model", s(&dir.path().join("m"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));

    let labels = dir.path().join("few.txt");
    std::fs::write(&labels, "a\nb\n").unwrap();
    let res = ldfa(&["fit", "--input", s(&x), "--labels", s(&labels), "--mode", "pca", "--model", s(&dir.path().join("m"))]);
    let err = String::from_utf8_lossy(&res.stderr).to_string();
    assert!(err.contains("45") && err.contains('2'), "{err}");
}
