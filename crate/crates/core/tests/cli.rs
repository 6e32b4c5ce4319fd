use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dif::cli::{parse_scores, ModelFile};
use dif::data::{gen_blobs, gen_ring, load_csv, save_csv, BlobKind, CsvOptions, DataMatrix, RingParams};
use dif::math::{Matrix, RngStream};
use dif::scoring::{score_dataset, ScoreMode};
use tempfile::TempDir;

fn dif(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dif"))
        .current_dir(dir)
        .env_remove("DIF_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dif(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    dif(dir, args).status.code().unwrap()
}

fn ring_file(dir: &Path) -> PathBuf {
    let path = dir.join("ring.csv");
    let params = RingParams { n_normal: 300, n_anomaly: 12, ..Default::default() };
    save_csv(&gen_ring(&params, 3).unwrap(), &path).unwrap();
    path
}

fn small_fit(dir: &Path, extra: &[&str]) {
    let mut args = vec!["fit", "ring.csv", "--label-col", "label", "--r", "3", "--t", "2"];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn fit_writes_expected_tree_counts() {
    let tmp = TempDir::new().unwrap();
    let mut rng = RngStream::from_seed(1);
    let x = Matrix::from_fn(1000, 8, |_, _| rng.standard_normal());
    save_csv(&DataMatrix::new(x, None, "gauss").unwrap(), tmp.path().join("g.csv")).unwrap();
    ok(tmp.path(), &["fit", "g.csv", "--out", "default.dif"]);
    ok(tmp.path(), &["fit", "g.csv", "--r", "2", "--t", "3", "--out", "small.dif"]);
    assert_eq!(ModelFile::load(tmp.path().join("default.dif")).unwrap().model.tree_count(), 300);
    assert_eq!(ModelFile::load(tmp.path().join("small.dif")).unwrap().model.tree_count(), 6);
}

#[test]
fn refit_is_byte_identical_for_every_algorithm() {
    let tmp = TempDir::new().unwrap();
    ring_file(tmp.path());
    for algo in ["dif", "iforest", "eif"] {
        for name in ["a.dif", "b.dif"] {
            small_fit(tmp.path(), &["--algo", algo, "--trees", "20", "--seed", "5", "--out", name]);
        }
        let a = std::fs::read(tmp.path().join("a.dif")).unwrap();
        assert_eq!(a, std::fs::read(tmp.path().join("b.dif")).unwrap(), "{algo}");
        small_fit(tmp.path(), &["--algo", algo, "--trees", "20", "--seed", "6", "--out", "c.dif"]);
        assert_ne!(a, std::fs::read(tmp.path().join("c.dif")).unwrap(), "{algo}");
    }
}

#[test]
fn scoring_the_training_file_matches_in_process_scores() {
    let tmp = TempDir::new().unwrap();
    let train = ring_file(tmp.path());
    small_fit(tmp.path(), &["--out", "m.dif"]);
    let model = ModelFile::load(tmp.path().join("m.dif")).unwrap();
    let dif::cli::Model::Dif(forest) = &model.model else { panic!("dif model expected") };
    let data = load_csv(&train, &CsvOptions { label_column: Some("label".into()), ..Default::default() }).unwrap();
    for (flag, mode) in [("deas", ScoreMode::Deas), ("path-only", ScoreMode::PathOnly)] {
        let text = ok(tmp.path(), &["score", "m.dif", "ring.csv", "--label-col", "label", "--mode", flag]);
        let expected: Vec<f64> = score_dataset(forest, data.values(), mode).unwrap().iter().map(|b| b.final_score).collect();
        assert_eq!(parse_scores(&text).unwrap(), expected, "{flag}");
        assert!(text.starts_with(&format!("# config_hash={} seed=0\n", model.config.hash())));
    }
}

#[test]
fn jsonl_output_carries_provenance() {
    let tmp = TempDir::new().unwrap();
    ring_file(tmp.path());
    small_fit(tmp.path(), &["--out", "m.dif"]);
    let text = ok(tmp.path(), &["score", "m.dif", "ring.csv", "--label-col", "label", "--format", "jsonl"]);
    assert_eq!(text.lines().count(), 312);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["object_id"], 0);
    assert_eq!(first["seed"], 0);
    assert_eq!(first["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn scores_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    ring_file(tmp.path());
    small_fit(tmp.path(), &["--threads", "1", "--out", "one.dif"]);
    small_fit(tmp.path(), &["--threads", "4", "--out", "four.dif"]);
    let one = std::fs::read(tmp.path().join("one.dif")).unwrap();
    assert_eq!(one, std::fs::read(tmp.path().join("four.dif")).unwrap());
    let s1 = ok(tmp.path(), &["score", "one.dif", "ring.csv", "--label-col", "label", "--threads", "1"]);
    let s4 = ok(tmp.path(), &["score", "one.dif", "ring.csv", "--label-col", "label", "--threads", "4"]);
    assert_eq!(s1, s4);
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ring_file(dir);
    small_fit(dir, &["--out", "m.dif"]);

    assert_eq!(code(dir, &["fit", "missing.csv", "--out", "x.dif"]), 1);
    std::fs::write(dir.join("bad.csv"), "a,b\n1,oops\n").unwrap();
    assert_eq!(code(dir, &["fit", "bad.csv", "--out", "x.dif"]), 2);
    std::fs::write(dir.join("junk.dif"), b"not a model").unwrap();
    assert_eq!(code(dir, &["score", "junk.dif", "ring.csv"]), 2);
    assert_eq!(code(dir, &["fit", "ring.csv", "--mode", "fast", "--out", "x.dif"]), 3);
    assert_eq!(code(dir, &["--no-such-flag"]), 3);
    std::fs::write(dir.join("cfg.txt"), "colour = red\n").unwrap();
    assert_eq!(code(dir, &["fit", "ring.csv", "--config", "cfg.txt", "--out", "x.dif"]), 3);

    // label column left in as a third feature
    assert_eq!(code(dir, &["score", "m.dif", "ring.csv", "--out", "wide.csv"]), 4);
    assert!(!dir.join("wide.csv").exists());

    let scores = ok(dir, &["score", "m.dif", "ring.csv", "--label-col", "label"]);
    std::fs::write(dir.join("s.csv"), &scores).unwrap();
    let mut lines = String::from("label\n");
    for _ in 0..312 {
        lines += "0\n";
    }
    std::fs::write(dir.join("zeros.csv"), lines).unwrap();
    assert_eq!(code(dir, &["eval", "s.csv", "zeros.csv"]), 5);

    assert_eq!(code(dir, &["verify", "--reduction-trees", "10", "--corrupt"]), 6);

    std::fs::write(dir.join("empty.csv"), "x0,x1\n").unwrap();
    assert_eq!(code(dir, &["score", "m.dif", "empty.csv", "--out", "e.csv"]), 7);
    assert!(!dir.join("e.csv").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    ring_file(tmp.path());
    std::fs::write(tmp.path().join("cfg.txt"), "# small\nr = 2\nt = 2\nseed = 9\n").unwrap();
    ok(tmp.path(), &["fit", "ring.csv", "--label-col", "label", "--config", "cfg.txt", "--t", "5", "--out", "m.dif"]);
    let m = ModelFile::load(tmp.path().join("m.dif")).unwrap();
    assert_eq!((m.config.r, m.config.t, m.config.seed), (2, 5, 9));
    assert_eq!(m.model.tree_count(), 10);
}

#[test]
fn eval_reports_metrics_and_aii() {
    let tmp = TempDir::new().unwrap();
    ring_file(tmp.path());
    small_fit(tmp.path(), &["--out", "m.dif"]);
    ok(
        tmp.path(),
        &["score", "m.dif", "ring.csv", "--label-col", "label", "--out", "s.csv", "--dump-rep", "z.csv", "--member", "2"],
    );
    let report: serde_json::Value =
        serde_json::from_str(&ok(tmp.path(), &["eval", "s.csv", "ring.csv", "--rep", "z.csv"])).unwrap();
    for key in ["auc_roc", "auc_pr", "aii"] {
        let v = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key}={v}");
    }
    assert_eq!(report["seed"], 0);

    std::fs::write(tmp.path().join("perfect.csv"), "object_id,score\n0,0.9\n1,0.1\n2,0.8\n").unwrap();
    std::fs::write(tmp.path().join("y.csv"), "label\n1\n0\n1\n").unwrap();
    let perfect: serde_json::Value = serde_json::from_str(&ok(tmp.path(), &["eval", "perfect.csv", "y.csv"])).unwrap();
    assert_eq!((perfect["auc_roc"].as_f64(), perfect["auc_pr"].as_f64()), (Some(1.0), Some(1.0)));
    assert!(perfect.get("aii").is_none());
}

#[test]
fn verify_and_benchmark_reports() {
    let tmp = TempDir::new().unwrap();
    let v: serde_json::Value = serde_json::from_str(&ok(tmp.path(), &["verify", "--reduction-trees", "20", "--seed", "4"])).unwrap();
    assert_eq!(v["iforest_max_diff"].as_f64(), Some(0.0));
    assert_eq!(v["eif_predicate_agreement"].as_f64(), Some(1.0));
    assert_eq!(v["seed"], 4);
    assert_eq!(v["datasets"].as_array().unwrap().len(), 3);

    let b: serde_json::Value =
        serde_json::from_str(&ok(tmp.path(), &["benchmark", "--suite", "ring", "--seeds", "0,1", "--r", "4"])).unwrap();
    let entries = b["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3 * 2);
    for s in b["summary"].as_array().unwrap() {
        let vals: Vec<f64> = entries
            .iter()
            .filter(|e| e["method"] == s["method"] && e["setting"] == s["setting"])
            .map(|e| e["auc_roc"].as_f64().unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - s["auc_roc_mean"].as_f64().unwrap()).abs() < 1e-15);
    }
}

#[test]
fn generate_and_score_map_write_artifacts() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["generate", "--scenario", "sinusoid", "--n-normal", "50", "--n-anomaly", "5", "--seed", "2", "--out", "s.csv"]);
    let text = std::fs::read_to_string(tmp.path().join("s.csv")).unwrap();
    assert!(text.starts_with("# config_hash="));
    let data = load_csv(tmp.path().join("s.csv"), &CsvOptions { label_column: Some("label".into()), ..Default::default() }).unwrap();
    assert_eq!((data.n_rows(), data.n_anomalies()), (55, 5));

    ok(tmp.path(), &["score-map", "--scenario", "two-blob", "--resolution", "12", "--r", "3", "--out", "map.csv"]);
    let map = std::fs::read_to_string(tmp.path().join("map.csv")).unwrap();
    assert_eq!(map.lines().count(), 2 + 144);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("map.json")).unwrap()).unwrap();
    assert_eq!(meta["algorithm"], "dif");
    assert_eq!(meta["resolution"], 12);
}

#[test]
fn generated_blobs_round_trip_through_csv() {
    let tmp = TempDir::new().unwrap();
    let data = gen_blobs(BlobKind::TwoBlob, 40, 0.5, 1).unwrap();
    save_csv(&data, tmp.path().join("b.csv")).unwrap();
    let back = load_csv(tmp.path().join("b.csv"), &CsvOptions::default()).unwrap();
    assert_eq!(back.values(), data.values());
}
