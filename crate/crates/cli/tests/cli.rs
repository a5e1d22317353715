use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lconf_core::dataio::{read_confidence_csv, read_embeddings, read_labels_csv, write_embeddings, write_labels_csv};
use lconf_core::FeatureMatrix;
use serde_json::Value;
use tempfile::TempDir;

fn lconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lconf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lconf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &TempDir, n: usize, classes: usize, dim: usize, seed: u64) -> (PathBuf, PathBuf) {
    let (x, y) = (p(dir, "x.lcf"), p(dir, "y.csv"));
    ok(&[
        "synth", "--n", &n.to_string(), "--classes", &classes.to_string(), "--dim", &dim.to_string(),
        "--sep", "8", "--seed", &seed.to_string(), "--out-features", s(&x), "--out-labels", s(&y),
    ]);
    (x, y)
}

#[test]
fn synth_writes_loadable_files() {
    let dir = TempDir::new().unwrap();
    let (x, y) = synth(&dir, 3, 3, 4, 1);
    let m = read_embeddings(&x).unwrap();
    assert_eq!((m.n(), m.d()), (3, 4));
    assert_eq!(read_labels_csv(&y).unwrap(), vec![0, 1, 2]);
    assert_eq!(read_labels_csv(p(&dir, "y.truth.csv")).unwrap(), vec![0, 1, 2]);
}

#[test]
fn synth_is_deterministic_per_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (xa, _) = synth(&a, 500, 4, 16, 9);
    let (xb, _) = synth(&b, 500, 4, 16, 9);
    assert_eq!(std::fs::read(xa).unwrap(), std::fs::read(xb).unwrap());
}

#[test]
fn corrupt_rate_zero_is_identity() {
    let dir = TempDir::new().unwrap();
    let (_, y) = synth(&dir, 60, 3, 4, 2);
    let out = p(&dir, "noisy.csv");
    ok(&["corrupt", "--labels", s(&y), "--noise", "sym", "--rate", "0", "--seed", "1", "--out", s(&out)]);
    assert_eq!(std::fs::read(&y).unwrap(), std::fs::read(&out).unwrap());
}

#[test]
fn corrupt_full_symmetric_rate_flips_half_of_two_classes() {
    let dir = TempDir::new().unwrap();
    let (_, y) = synth(&dir, 4000, 2, 2, 3);
    let out = p(&dir, "noisy.csv");
    ok(&["corrupt", "--labels", s(&y), "--noise", "sym", "--rate", "1", "--seed", "5", "--out", s(&out)]);
    let (a, b) = (read_labels_csv(&y).unwrap(), read_labels_csv(&out).unwrap());
    let flipped = a.iter().zip(&b).filter(|(u, v)| u != v).count();
    // Binomial(4000, 0.5): 4 standard deviations is about 126.
    assert!((flipped as i64 - 2000).abs() < 126, "{flipped} flipped");
}

#[test]
fn asymmetric_needs_transition() {
    let dir = TempDir::new().unwrap();
    let (_, y) = synth(&dir, 10, 2, 2, 3);
    let out = lconf(&["corrupt", "--labels", s(&y), "--noise", "asym", "--rate", "0.3", "--seed", "1", "--out", s(&p(&dir, "n.csv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn asymmetric_with_shipped_pair_flip() {
    let dir = TempDir::new().unwrap();
    let (_, y) = synth(&dir, 1000, 10, 10, 4);
    let t = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/cifar10_pairflip.csv");
    let out = p(&dir, "n.csv");
    ok(&["corrupt", "--labels", s(&y), "--noise", "asym", "--rate", "1", "--transition", s(&t), "--seed", "1", "--out", s(&out)]);
    let noisy = read_labels_csv(&out).unwrap();
    let truth = read_labels_csv(&y).unwrap();
    for (t, n) in truth.iter().zip(&noisy) {
        let want = match t { 9 => 1, 2 => 0, 4 => 7, 3 => 5, 5 => 3, other => *other };
        assert_eq!(*n, want);
    }
}

fn two_node_fixture(dir: &TempDir) -> (PathBuf, PathBuf) {
    let (x, y) = (p(dir, "pair.lcf"), p(dir, "pair.csv"));
    write_embeddings(&x, &FeatureMatrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap()).unwrap();
    write_labels_csv(&y, &[0, 1]).unwrap();
    (x, y)
}

#[test]
fn estimate_two_node_fixture() {
    let dir = TempDir::new().unwrap();
    let (x, y) = two_node_fixture(&dir);
    let out = p(&dir, "w.csv");
    ok(&["estimate", "--features", s(&x), "--labels", s(&y), "--k", "1", "--out", s(&out)]);
    for v in read_confidence_csv(&out).unwrap().values() {
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }
    let stats: Value = serde_json::from_slice(&std::fs::read(p(&dir, "w.stats.json")).unwrap()).unwrap();
    assert_eq!(stats["method"], "laplace");
    assert!(stats["reduced_dim"].is_null());
}

#[test]
fn estimate_with_pca_records_reduction() {
    let dir = TempDir::new().unwrap();
    let (x, y) = synth(&dir, 300, 3, 12, 5);
    let stats = p(&dir, "s.json");
    ok(&["estimate", "--features", s(&x), "--labels", s(&y), "--pca-dim", "4", "--out", s(&p(&dir, "w.csv")), "--stats", s(&stats)]);
    let stats: Value = serde_json::from_slice(&std::fs::read(stats).unwrap()).unwrap();
    assert_eq!(stats["reduced_dim"], 4);
    assert!(stats["timings"]["graph_and_solve_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn gmm_requires_probs() {
    let dir = TempDir::new().unwrap();
    let (x, y) = two_node_fixture(&dir);
    let out = lconf(&["estimate", "--features", s(&x), "--labels", s(&y), "--method", "gmm", "--out", s(&p(&dir, "w.csv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gmm_on_probabilities() {
    let dir = TempDir::new().unwrap();
    let n = 200;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    // Half the samples are confidently right, half confidently wrong.
    let probs: Vec<f64> = (0..n)
        .flat_map(|i| {
            let right = if i < n / 2 { 0.95 } else { 0.05 };
            let p_label = right - 0.001 * (i % 7) as f64;
            if labels[i] == 0 { [p_label, 1.0 - p_label] } else { [1.0 - p_label, p_label] }
        })
        .collect();
    let (pp, y, out) = (p(&dir, "p.lcf"), p(&dir, "y.csv"), p(&dir, "w.csv"));
    write_embeddings(&pp, &FeatureMatrix::new(n, 2, probs).unwrap()).unwrap();
    write_labels_csv(&y, &labels).unwrap();
    ok(&["estimate", "--labels", s(&y), "--method", "gmm", "--probs", s(&pp), "--out", s(&out)]);
    let w = read_confidence_csv(&out).unwrap();
    assert!(w.values()[..n / 2].iter().all(|v| *v > 0.5));
    assert!(w.values()[n / 2..].iter().all(|v| *v < 0.5));
}

#[test]
fn degenerate_graph_exits_with_numerical_code() {
    let dir = TempDir::new().unwrap();
    let (x, y) = (p(&dir, "x.lcf"), p(&dir, "y.csv"));
    write_embeddings(&x, &FeatureMatrix::new(3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
    write_labels_csv(&y, &[0, 1, 0]).unwrap();
    let out = lconf(&["estimate", "--features", s(&x), "--labels", s(&y), "--k", "1", "--out", s(&p(&dir, "w.csv"))]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_features_exit_with_data_code() {
    let dir = TempDir::new().unwrap();
    let (_, y) = two_node_fixture(&dir);
    let bad = p(&dir, "bad.lcf");
    std::fs::write(&bad, b"LCF1garbage").unwrap();
    let out = lconf(&["estimate", "--features", s(&bad), "--labels", s(&y), "--k", "1", "--out", s(&p(&dir, "w.csv"))]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset"));
}

#[test]
fn bench_reports_every_repeat() {
    let dir = TempDir::new().unwrap();
    let (x, y) = synth(&dir, 400, 3, 10, 6);
    let noisy = p(&dir, "noisy.csv");
    ok(&["corrupt", "--labels", s(&y), "--noise", "sym", "--rate", "0.4", "--seed", "2", "--out", s(&noisy)]);
    let out = ok(&[
        "--threads", "1", "bench", "--features", s(&x), "--labels", s(&noisy), "--pca-dim", "10",
        "--repeats", "3", "--truth-labels", s(&y),
    ]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    for variant in ["plain", "pca"] {
        assert_eq!(report[variant]["seconds"].as_array().unwrap().len(), 3);
        assert!(report[variant]["median_seconds"].as_f64().unwrap() > 0.0);
    }
    let f = |v: &str| report[v]["f1"].as_f64().unwrap();
    assert!((f("plain") - f("pca")).abs() <= 0.02);
}

fn small_config(rounds: usize, warmup: usize) -> String {
    format!(
        r#"{{
  "data": {{"train": 120, "test": 60, "classes": 3, "dim": 5, "separation": 4.0, "seed": 1}},
  "noise": {{"kind": "symmetric", "rate": 0.3, "seed": 2}},
  "train": {{"rounds": {rounds}, "warmup_rounds": {warmup}, "iterations_per_round": 4, "batch_size": 32, "hidden": 8, "seed": 3}}
}}"#
    )
}

#[test]
fn pipeline_warmup_only_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "cfg.json");
    std::fs::write(&cfg, small_config(3, 3)).unwrap();
    let report = p(&dir, "report.json");
    ok(&["pipeline", "--config", s(&cfg), "--out", s(&report)]);
    let r: Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    let rounds = r["per_epoch"].as_array().unwrap();
    assert_eq!(rounds.len(), 6);
    assert!(rounds.iter().all(|e| e["phase"] == "warmup"));
    assert_eq!(r["final"]["test_accuracy"], r["final"]["warmup_test_accuracy"]);
    assert!(r["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn pipeline_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "cfg.json");
    std::fs::write(&cfg, small_config(4, 2)).unwrap();
    let a = ok(&["pipeline", "--config", s(&cfg)]);
    let b = ok(&["pipeline", "--config", s(&cfg)]);
    let strip = |o: &Output| {
        let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["timings"] = Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));
    let late = &strip(&a)["per_epoch"][7]["phase"];
    assert!(late == "refurbish" || late == "skipped", "{late}");
}

#[test]
fn malformed_config_reports_pointer() {
    let dir = TempDir::new().unwrap();
    let cfg = p(&dir, "cfg.json");
    std::fs::write(&cfg, small_config(4, 2).replace("\"hidden\": 8", "\"hidden\": -8")).unwrap();
    let out = lconf(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/train/hidden"));

    std::fs::write(&cfg, small_config(4, 2).replace("\"rounds\": 4", "\"rounds\": 4, \"round\": 1")).unwrap();
    let out = lconf(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);

    std::fs::write(&cfg, small_config(2, 4)).unwrap();
    let out = lconf(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
}

fn eval(dir: &TempDir, w: &[f64], truth: &[usize], noisy: &[usize]) -> Value {
    let (wp, tp, np) = (p(dir, "w.csv"), p(dir, "t.csv"), p(dir, "n.csv"));
    let conf = lconf_core::ConfidenceVector::new(w.to_vec()).unwrap();
    lconf_core::dataio::write_confidence_csv(&wp, &conf).unwrap();
    write_labels_csv(&tp, truth).unwrap();
    write_labels_csv(&np, noisy).unwrap();
    let out = ok(&["eval", "--confidence", s(&wp), "--truth-labels", s(&tp), "--noisy-labels", s(&np)]);
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn eval_perfect_and_inverted() {
    let dir = TempDir::new().unwrap();
    let truth = [0, 1, 2, 0, 1];
    let noisy = [0, 2, 2, 1, 1];
    let perfect = eval(&dir, &[1.0, 0.0, 1.0, 0.0, 1.0], &truth, &noisy);
    assert_eq!(perfect["scores"]["f1"], 1.0);
    let inverted = eval(&dir, &[0.0, 1.0, 0.0, 1.0, 0.0], &truth, &noisy);
    assert_eq!(inverted["scores"]["f1"], 0.0);
    assert_eq!(inverted["clean"], 3);
}
