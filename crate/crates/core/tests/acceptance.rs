//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line to
//! standard error (bypassing output capture) before asserting.
//!
//! The tests hold a shared lock so timing-sensitive checks never overlap.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use dif::baselines::{iforest_fit_score, verify_eif_reduction, verify_iforest_reduction, BaselineConfig};
use dif::cli::{
    cmd_benchmark, cmd_scaling, fit_model, score_with, with_threads, Algorithm, RunConfig, Scenario, Suite,
    CONTAMINATION_LEVELS,
};
use dif::data::{gen_ring, BlobKind, DataMatrix, RingParams};
use dif::math::{Activation, InitDistribution, Matrix, RngStream};
use dif::metrics::{aii, auc_pr, auc_roc, AiiConfig, LabeledScores};
use dif::representation::{build_network, CereNetwork, NetworkSpec};
use dif::scoring::{score_dataset, ScoreMode};
use dif::{DeepForest, ForestConfig};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!("{} criterion {id:>2} ({name}): {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn elapsed(start: Instant) -> String {
    format!("{:.1}s", start.elapsed().as_secs_f64())
}

fn naive_forward(net: &CereNetwork, x: &Matrix, u: usize) -> Matrix {
    let mut h = x.clone();
    for layer in net.layers() {
        let (p, q, w0) = (layer.p(u), layer.q(u), layer.base_weights());
        let next = Matrix::from_fn(h.rows(), w0.cols(), |i, j| {
            (0..w0.rows()).map(|k| h.get(i, k) * (w0.get(k, j) * p[k] * q[j])).sum()
        });
        h = if layer.applies_activation() {
            layer.activation().apply(&next)
        } else {
            next
        };
    }
    h
}

fn max_rel(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn criterion_01_cere_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let mut meta = RngStream::from_seed(2024);
    let (instances, mut worst, mut bitwise) = (120, 0.0f64, true);
    for case in 0..instances {
        let dim = 1 + meta.index(24);
        let depth = meta.index(3);
        let hidden: Vec<usize> = (0..depth).map(|_| 1 + meta.index(32)).collect();
        let spec = NetworkSpec {
            hidden: Some(hidden),
            output_dim: 1 + meta.index(16),
            activation: [Activation::Tanh, Activation::Relu, Activation::LeakyRelu(0.2)][meta.index(3)],
            init: if meta.index(2) == 0 { InitDistribution::StandardNormal } else { InitDistribution::Uniform(1.0) },
            activate_output: meta.index(2) == 0,
        };
        let r = 1 + meta.index(20);
        let net = build_network(dim, &spec, r, &RngStream::from_seed(case)).unwrap();
        let rows = 1 + meta.index(80);
        let x = Matrix::from_fn(rows, dim, |_, _| meta.standard_normal());
        let set = net.forward_ensemble(&x, 1 + meta.index(64)).unwrap();
        for u in 0..r {
            let member = net.forward_member(&x, u).unwrap();
            bitwise &= member.as_slice() == set.member(u).as_slice();
            worst = worst.max(max_rel(&member, &naive_forward(&net, &x, u)));
        }
    }
    let pass = bitwise && worst <= 1e-10 && start.elapsed() < Duration::from_secs(30);
    report(
        1,
        "CERE equivalence",
        pass,
        format!("{instances} instances, ensemble==member bitwise: {bitwise}, max rel err vs explicit weights {worst:.2e}, {}", elapsed(start)),
    );
    assert!(pass);
}

fn reduction_datasets(seed: u64) -> Vec<DataMatrix> {
    vec![
        gen_ring(&RingParams::default(), seed).unwrap(),
        Scenario::blobs(BlobKind::TwoBlob).generate(seed).unwrap(),
        Scenario::blobs(BlobKind::Sinusoid).generate(seed).unwrap(),
    ]
}

#[test]
fn criterion_02_iforest_reduction() {
    let _g = serial();
    let start = Instant::now();
    let (mut runs, mut failures, mut worst) = (0, 0, 0.0f64);
    for seed in 0..10 {
        for data in reduction_datasets(seed) {
            let r = verify_iforest_reduction(&data, seed).unwrap();
            runs += 1;
            worst = worst.max(r.max_abs_diff);
            if !(r.passed && r.max_abs_diff == 0.0 && r.split_sequences_equal.iter().all(|&e| e)) {
                failures += 1;
            }
        }
    }
    let pass = failures == 0 && start.elapsed() < Duration::from_secs(60);
    report(
        2,
        "iForest reduction",
        pass,
        format!("{runs} seed x dataset runs, {failures} failing, max |score diff| {worst:e}, {}", elapsed(start)),
    );
    assert!(pass);
}

#[test]
fn criterion_03_eif_reduction() {
    let _g = serial();
    let start = Instant::now();
    let data = gen_ring(&RingParams::default(), 0).unwrap();
    let r = verify_eif_reduction(&data, 0).unwrap();
    let pass = r.passed
        && r.random_triples >= 500
        && r.triple_agreement == 1.0
        && r.node_agreement == 1.0
        && start.elapsed() < Duration::from_secs(10);
    report(
        3,
        "EIF reduction",
        pass,
        format!(
            "{} triples agree {:.4}, {} nodes / {} decisions agree {:.4}, {}",
            r.random_triples,
            r.triple_agreement,
            r.nodes_checked,
            r.decisions_checked,
            r.node_agreement,
            elapsed(start)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_ring_hard_anomalies() {
    let _g = serial();
    let start = Instant::now();
    let seeds = 0..5u64;
    let (mut dif, mut iforest) = (Vec::new(), Vec::new());
    for seed in seeds {
        let data = gen_ring(&RingParams::default(), seed).unwrap();
        let labels = data.require_labels().unwrap();
        let forest = DeepForest::fit(data.values(), &ForestConfig { seed, ..Default::default() }).unwrap();
        let s: Vec<f64> = score_dataset(&forest, data.values(), ScoreMode::Deas)
            .unwrap()
            .iter()
            .map(|b| b.final_score)
            .collect();
        dif.push(auc_roc(&LabeledScores::new(&s, labels).unwrap()));
        let b = iforest_fit_score(data.values(), &BaselineConfig { seed, ..Default::default() }).unwrap();
        iforest.push(auc_roc(&LabeledScores::new(&b, labels).unwrap()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (d, i) = (mean(&dif), mean(&iforest));
    let pass = d >= 0.9 && d > i && start.elapsed() < Duration::from_secs(120);
    report(
        4,
        "ring hard anomalies",
        pass,
        format!("mean AUC-ROC over 5 seeds: dif {d:.4} vs iforest {i:.4} (per seed dif {dif:.3?}), {}", elapsed(start)),
    );
    assert!(pass);
}

#[test]
fn criterion_05_deas_factorization() {
    let _g = serial();
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    let runs: Vec<(DataMatrix, ForestConfig)> = vec![
        (gen_ring(&RingParams::default(), 1).unwrap(), ForestConfig { seed: 1, ..Default::default() }),
        (
            Scenario::blobs(BlobKind::Sinusoid).generate(2).unwrap(),
            ForestConfig { representations: 7, trees_per_representation: 3, subsample_size: 64, seed: 2, ..Default::default() },
        ),
        (
            Scenario::blobs(BlobKind::SingleBlob).generate(3).unwrap(),
            ForestConfig { representations: 1, trees_per_representation: 1, subsample_size: 2, seed: 3, ..Default::default() },
        ),
    ];
    for (data, cfg) in &runs {
        let forest = DeepForest::fit(data.values(), cfg).unwrap();
        let deas = score_dataset(&forest, data.values(), ScoreMode::Deas).unwrap();
        let path = score_dataset(&forest, data.values(), ScoreMode::PathOnly).unwrap();
        for (d, p) in deas.iter().zip(&path) {
            checked += 1;
            if d.final_score != p.final_score * d.mean_deviation
                || d.final_score != d.depth_score(forest.subsample_size()) * d.mean_deviation
            {
                mismatches += 1;
            }
        }
    }
    let pass = mismatches == 0;
    report(
        5,
        "DEAS factorization",
        pass,
        format!("{checked} objects over {} runs, {mismatches} not exactly path-only x mean deviation", runs.len()),
    );
    assert!(pass);
}

fn brute_roc(s: &[f64], y: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn brute_ap(s: &[f64], y: &[u8]) -> f64 {
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let n_pos = y.iter().filter(|&&l| l == 1).count() as f64;
    let (mut ap, mut prev) = (0.0, 0.0);
    for t in thresholds {
        let above: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= t).collect();
        let tp = above.iter().filter(|&&i| y[i] == 1).count() as f64;
        ap += (tp / n_pos - prev) * (tp / above.len() as f64);
        prev = tp / n_pos;
    }
    ap
}

#[test]
fn criterion_06_metric_oracles() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = RngStream::from_seed(6);
    let (mut worst_roc, mut worst_ap) = (0.0f64, 0.0f64);
    let mut instances = 0;
    while instances < 200 {
        let n = 2 + rng.index(199);
        let coarse = rng.index(2) == 0;
        let s: Vec<f64> = (0..n)
            .map(|_| if coarse { rng.index(6) as f64 } else { rng.standard_normal() })
            .collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.unit() < 0.3)).collect();
        let Ok(ls) = LabeledScores::new(&s, &y) else { continue };
        instances += 1;
        worst_roc = worst_roc.max((auc_roc(&ls) - brute_roc(&s, &y)).abs());
        worst_ap = worst_ap.max((auc_pr(&ls) - brute_ap(&s, &y)).abs());
    }
    let pass = worst_roc <= 1e-12 && worst_ap <= 1e-12 && start.elapsed() < Duration::from_secs(30);
    report(
        6,
        "metric oracles",
        pass,
        format!("{instances} instances (N <= 200, half with ties), max err roc {worst_roc:.1e} ap {worst_ap:.1e}, {}", elapsed(start)),
    );
    assert!(pass);
}

fn gaussian_with_anomalies(n_normal: usize, n_anomaly: usize, dim: usize, shift: f64, rng: &mut RngStream) -> (Matrix, Vec<u8>) {
    let rows = n_normal + n_anomaly;
    let x = Matrix::from_fn(rows, dim, |i, _| rng.standard_normal() + if i >= n_normal { shift } else { 0.0 });
    let labels = (0..rows).map(|i| u8::from(i >= n_normal)).collect();
    (x, labels)
}

#[test]
fn criterion_07_aii_sanity() {
    let _g = serial();
    let cfg = AiiConfig { anchors: 20, references: 1000 };
    let mut rng = RngStream::from_seed(7);
    let (x, y) = gaussian_with_anomalies(1500, 40, 4, 50.0, &mut rng);
    let far = aii(&x, &y, &RngStream::from_seed(70), cfg).unwrap();
    let trials: Vec<f64> = (0..20u64)
        .map(|t| {
            let (x, y) = gaussian_with_anomalies(1500, 100, 4, 0.0, &mut rng);
            aii(&x, &y, &RngStream::from_seed(100 + t), cfg).unwrap()
        })
        .collect();
    let mean = trials.iter().sum::<f64>() / trials.len() as f64;
    let (lo, hi) = trials.iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let pass = far == 1.0 && (mean - 0.5).abs() <= 0.15;
    report(
        7,
        "AII sanity",
        pass,
        format!("far anomalies {far:.3}; same-distribution mean over 20 trials {mean:.3} (range {lo:.3}..{hi:.3})"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_scaling_shape() {
    let _g = serial();
    let start = Instant::now();
    let sizes = [1000, 2000, 4000, 8000];
    let dims = [16, 64, 256, 1024];
    let rep = cmd_scaling(&RunConfig::default(), &sizes, &dims, 3).unwrap();
    let time = |n: usize, d: usize| rep.rows.iter().find(|r| r.n == n && r.d == d).unwrap().seconds;
    let n_ratios: Vec<f64> = sizes.windows(2).map(|w| time(w[1], 32) / time(w[0], 32)).collect();
    // each dims step is two doublings
    let d_ratios: Vec<f64> = dims
        .windows(2)
        .map(|w| (time(5000, w[1]) / time(5000, w[0])).powf(1.0 / (w[1] as f64 / w[0] as f64).log2()))
        .collect();
    let worst = n_ratios.iter().chain(&d_ratios).fold(0.0f64, |a, &b| a.max(b));
    let pass = worst <= 2.5 && start.elapsed() < Duration::from_secs(600);
    report(
        8,
        "scaling shape",
        pass,
        format!("per-doubling ratios N {n_ratios:.2?}, D {d_ratios:.2?}, {}", elapsed(start)),
    );
    assert!(pass);
}

#[test]
fn criterion_09_determinism() {
    let _g = serial();
    let dir = tempfile::TempDir::new().unwrap();
    let data = gen_ring(&RingParams::default(), 9).unwrap();
    let csv = dir.path().join("ring.csv");
    dif::data::save_csv(&data, &csv).unwrap();
    let opts = dif::data::CsvOptions { label_column: Some("label".into()), ..Default::default() };
    let mut identical = true;
    let mut invariant = true;
    for algo in Algorithm::ALL {
        let config = RunConfig::default().with_seed(9).with_algorithm(algo);
        let (a, b) = (dir.path().join("a.dif"), dir.path().join("b.dif"));
        dif::cli::cmd_fit(&config, &csv, &opts, &a).unwrap();
        dif::cli::cmd_fit(&config, &csv, &opts, &b).unwrap();
        identical &= std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
        let model = dif::cli::ModelFile::load(&a).unwrap();
        let one = with_threads(Some(1), || score_with(&model, data.values(), None)).unwrap().unwrap();
        let four = with_threads(Some(4), || score_with(&model, data.values(), None)).unwrap().unwrap();
        let refit = with_threads(Some(4), || fit_model(data.values(), &config)).unwrap().unwrap();
        invariant &= one == four && refit.encode() == std::fs::read(&a).unwrap();
    }
    let pass = identical && invariant;
    report(
        9,
        "determinism",
        pass,
        format!("refit byte-identical for dif/iforest/eif: {identical}; fit and scores equal under 1 vs 4 threads: {invariant}"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_contamination_protocol() {
    let _g = serial();
    let start = Instant::now();
    let seeds = [0, 1, 2, 3, 4];
    let rep = cmd_benchmark(&RunConfig::default(), Suite::Contamination, &seeds, &[Algorithm::Dif]).unwrap();
    let settings: Vec<String> = CONTAMINATION_LEVELS.iter().map(|r| format!("rho={r}")).collect();
    let well_formed = rep.entries.len() == seeds.len() * settings.len()
        && rep.summary.len() == settings.len()
        && rep.summary.iter().all(|s| {
            let v: Vec<&_> = rep.entries.iter().filter(|e| e.setting == s.setting).collect();
            let roc = v.iter().map(|e| e.auc_roc).sum::<f64>() / v.len() as f64;
            let pr = v.iter().map(|e| e.auc_pr).sum::<f64>() / v.len() as f64;
            v.len() == seeds.len() && (roc - s.auc_roc_mean).abs() < 1e-12 && (pr - s.auc_pr_mean).abs() < 1e-12
        });
    let auc = |setting: &str, seed: u64| {
        rep.entries
            .iter()
            .find(|e| e.setting == setting && e.seed == seed)
            .map(|e| e.auc_roc)
            .unwrap()
    };
    let holds = seeds.iter().filter(|&&s| auc(&settings[0], s) >= auc(&settings[5], s)).count();
    let pass = well_formed && holds >= 4;
    report(
        10,
        "contamination protocol",
        pass,
        format!(
            "report consistent: {well_formed}; AUC(rho=0) >= AUC(rho=10%) on {holds}/5 seeds; mean AUC {:?}, {}",
            rep.summary.iter().map(|s| format!("{}:{:.3}", s.setting, s.auc_roc_mean)).collect::<Vec<_>>(),
            elapsed(start)
        ),
    );
    assert!(pass);
}
