//! The command layer behind the `dif` binary. Every command is a plain
//! function so it can be driven from tests and examples as well.

mod config;
mod model_file;

pub use config::{Algorithm, RunConfig};
pub use model_file::{Model, ModelFile, FORMAT_VERSION, MAGIC};

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{
    verify_eif_reduction_with, verify_iforest_reduction_with, EifReduction, ExtendedIsolationForest,
    IForestReduction, IsolationForest, ReductionParams,
};
use crate::data::{
    adjust_contamination, gen_blobs_with_anomalies, gen_ring, gen_scaling_suite, load_csv, parse_csv,
    score_map_grid, BlobKind, Bounds, CsvOptions, DataMatrix, RingParams, ScoreMap,
};
use crate::error::{Error, Result};
use crate::forest::DeepForest;
use crate::math::{Matrix, RngStream};
use crate::metrics::{aii, auc_pr, auc_roc, AiiConfig, LabeledScores, MetricReport};
use crate::scoring::{provenance_comment, write_scores_csv, write_scores_jsonl, ScoreMode, ScoreSummary};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Fits the configured algorithm on `x`.
pub fn fit_model(x: &Matrix, config: &RunConfig) -> Result<ModelFile> {
    let model = match config.algorithm {
        Algorithm::Dif => Model::Dif(DeepForest::fit(x, &config.forest_config())?),
        Algorithm::IForest => Model::IForest(IsolationForest::fit(x, &config.baseline_config())?),
        Algorithm::Eif => Model::Eif(ExtendedIsolationForest::fit(x, &config.baseline_config())?),
    };
    Ok(ModelFile {
        config: config.clone(),
        model,
    })
}

/// Fits on a CSV file and writes the model file. Returns the fitted model.
pub fn cmd_fit(config: &RunConfig, train_csv: &Path, csv: &CsvOptions, out: &Path) -> Result<ModelFile> {
    let data = load_csv(train_csv, csv)?;
    let model = fit_model(data.values(), config)?;
    model.save(out)?;
    Ok(model)
}

/// Scores `x` with a loaded model; `mode` overrides the stored scoring mode.
pub fn score_with(model: &ModelFile, x: &Matrix, mode: Option<ScoreMode>) -> Result<Vec<ScoreSummary>> {
    if x.rows() == 0 {
        return Err(Error::input("nothing to score: the test file has no rows"));
    }
    if x.cols() != model.model.input_dim() {
        return Err(Error::shape(format!(
            "model was fitted on {} features, test data has {}",
            model.model.input_dim(),
            x.cols()
        )));
    }
    model
        .model
        .detector(mode.unwrap_or(model.config.mode))
        .score_summary(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for ScoreFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(ScoreFormat::Csv),
            "jsonl" => Ok(ScoreFormat::Jsonl),
            other => Err(Error::config(format!("unknown score format `{other}` (csv, jsonl)"))),
        }
    }
}

/// Renders score rows with the model's provenance.
pub fn render_scores(model: &ModelFile, rows: &[ScoreSummary], format: ScoreFormat) -> Result<String> {
    let mut out = Vec::new();
    let (hash, seed) = (model.config.hash(), model.config.seed);
    match format {
        ScoreFormat::Csv => write_scores_csv(&mut out, rows, &hash, seed)?,
        ScoreFormat::Jsonl => write_scores_jsonl(&mut out, rows, &hash, seed)?,
    }
    Ok(String::from_utf8(out).expect("scores are ASCII"))
}

/// Scores a CSV file and returns the complete output text. Nothing is
/// written by this function, so a failure leaves no partial output behind.
pub fn cmd_score(
    model_path: &Path,
    test_csv: &Path,
    csv: &CsvOptions,
    mode: Option<ScoreMode>,
    format: ScoreFormat,
) -> Result<String> {
    let model = ModelFile::load(model_path)?;
    let data = load_csv(test_csv, csv)?;
    let rows = score_with(&model, data.values(), mode)?;
    render_scores(&model, &rows, format)
}

/// The 0/1 column `column` of a CSV text.
pub fn read_labels(text: &str, column: &str) -> Result<Vec<u8>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse {
        row: 0,
        column: column.into(),
        message: e.to_string(),
    })?;
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| Error::Parse {
        row: 0,
        column: column.into(),
        message: "no such column".into(),
    })?;
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let err = |message: String| Error::Parse {
                row: i + 1,
                column: column.into(),
                message,
            };
            let rec = rec.map_err(|e| err(e.to_string()))?;
            match rec.get(idx).map(str::trim) {
                Some("0") | Some("0.0") => Ok(0),
                Some("1") | Some("1.0") => Ok(1),
                other => Err(err(format!("expected a 0/1 label, got `{}`", other.unwrap_or("")))),
            }
        })
        .collect()
}

/// Representation member `member` of `x` under a fitted deep forest, as CSV.
pub fn representation_csv(model: &ModelFile, x: &Matrix, member: usize) -> Result<String> {
    let Model::Dif(forest) = &model.model else {
        return Err(Error::config("representation dumps need a dif model"));
    };
    let reps = forest.represent(x)?;
    if member >= reps.len() {
        return Err(Error::Index {
            index: member,
            len: reps.len(),
        });
    }
    let z = reps.member(member);
    let mut out = provenance_comment(&model.config.hash(), model.config.seed) + "\n";
    out += &(0..z.cols()).map(|j| format!("z{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in z.iter_rows() {
        out += &row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        out.push('\n');
    }
    Ok(out)
}

/// `(config_hash, seed)` from a `# config_hash=.. seed=..` line.
pub fn read_provenance(text: &str) -> Option<(String, u64)> {
    let line = text.lines().find(|l| l.starts_with('#'))?;
    let mut hash = None;
    let mut seed = None;
    for part in line.trim_start_matches('#').split_whitespace() {
        if let Some(h) = part.strip_prefix("config_hash=") {
            hash = Some(h.to_string());
        } else if let Some(s) = part.strip_prefix("seed=") {
            seed = s.parse().ok();
        }
    }
    Some((hash?, seed?))
}

/// The `score` column of a scores CSV.
pub fn parse_scores(text: &str) -> Result<Vec<f64>> {
    let data = parse_csv(text, &CsvOptions::default())?;
    let names = data.feature_names().unwrap_or_default();
    let col = names
        .iter()
        .position(|n| n == "score")
        .ok_or_else(|| Error::Parse {
            row: 0,
            column: "score".into(),
            message: "scores file has no `score` column".into(),
        })?;
    Ok(data.values().column(col))
}

/// AUC-ROC and AUC-PR of a scores file against labels, plus AII when a
/// representation dump is supplied.
pub fn cmd_eval(scores_text: &str, labels: &[u8], representation: Option<&Matrix>, seed: u64) -> Result<MetricReport> {
    let scores = parse_scores(scores_text)?;
    let ls = LabeledScores::new(&scores, labels)?;
    let (config_hash, seed) = read_provenance(scores_text).unwrap_or_else(|| ("unknown".into(), seed));
    let aii = representation
        .map(|z| aii(z, labels, &RngStream::from_seed(seed), AiiConfig::default()))
        .transpose()?;
    Ok(MetricReport {
        auc_roc: auc_roc(&ls),
        auc_pr: auc_pr(&ls),
        aii,
        seed,
        config_hash,
    })
}

/// Synthetic scenario with tunable shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    Ring(RingParams),
    Blobs {
        kind: BlobKind,
        n_normal: usize,
        n_anomaly: usize,
        noise: f64,
    },
}

impl Scenario {
    pub fn blobs(kind: BlobKind) -> Self {
        Scenario::Blobs {
            kind,
            n_normal: 1000,
            n_anomaly: 30,
            noise: kind.default_noise(),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<DataMatrix> {
        match *self {
            Scenario::Ring(p) => gen_ring(&p, seed),
            Scenario::Blobs {
                kind,
                n_normal,
                n_anomaly,
                noise,
            } => gen_blobs_with_anomalies(kind, n_normal, n_anomaly, noise, seed),
        }
    }

    /// Default scenario by name: `ring`, `single-blob`, `two-blob` or `sinusoid`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.trim() {
            "ring" => Ok(Scenario::Ring(RingParams::default())),
            other => Ok(Scenario::blobs(other.parse()?)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Scenario::Ring(_) => "ring".into(),
            Scenario::Blobs { kind, .. } => kind.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Ring,
    Blobs,
    Contamination,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Ring => "ring",
            Suite::Blobs => "blobs",
            Suite::Contamination => "contamination",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ring" => Ok(Suite::Ring),
            "blobs" => Ok(Suite::Blobs),
            "contamination" => Ok(Suite::Contamination),
            other => Err(Error::config(format!("unknown suite `{other}` (ring, blobs, contamination)"))),
        }
    }
}

/// Contamination ratios swept by the contamination suite.
pub const CONTAMINATION_LEVELS: [f64; 6] = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkEntry {
    pub method: String,
    pub setting: String,
    pub seed: u64,
    pub auc_roc: f64,
    pub auc_pr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSummary {
    pub method: String,
    pub setting: String,
    pub n_seeds: usize,
    pub auc_roc_mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub auc_roc_std: f64,
    pub auc_pr_mean: f64,
    pub auc_pr_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub suite: Suite,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub entries: Vec<BenchmarkEntry>,
    pub summary: Vec<BenchmarkSummary>,
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() < 2 {
        0.0
    } else {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

fn evaluate(config: &RunConfig, train: &Matrix, test: &DataMatrix) -> Result<(f64, f64)> {
    let model = fit_model(train, config)?;
    let scores: Vec<f64> = score_with(&model, test.values(), None)?.iter().map(|s| s.score).collect();
    let ls = LabeledScores::new(&scores, test.require_labels()?)?;
    Ok((auc_roc(&ls), auc_pr(&ls)))
}

/// Runs `methods` on a synthetic suite for every seed.
///
/// The contamination suite trains on ring data adjusted to each ratio and
/// tests on the unadjusted data of the same seed.
pub fn cmd_benchmark(config: &RunConfig, suite: Suite, seeds: &[u64], methods: &[Algorithm]) -> Result<BenchmarkReport> {
    if seeds.is_empty() || methods.is_empty() {
        return Err(Error::config("benchmark needs at least one seed and one method"));
    }
    let mut entries = Vec::new();
    let ring = Scenario::Ring(RingParams::default());
    for &seed in seeds {
        let tasks: Vec<(String, DataMatrix, DataMatrix)> = match suite {
            Suite::Ring => {
                let d = ring.generate(seed)?;
                vec![("ring".into(), d.clone(), d)]
            }
            Suite::Blobs => BlobKind::ALL
                .iter()
                .map(|&k| {
                    let d = Scenario::blobs(k).generate(seed)?;
                    Ok((k.to_string(), d.clone(), d))
                })
                .collect::<Result<_>>()?,
            Suite::Contamination => {
                let d = ring.generate(seed)?;
                CONTAMINATION_LEVELS
                    .iter()
                    .map(|&rho| Ok((format!("rho={rho}"), adjust_contamination(&d, rho, seed)?, d.clone())))
                    .collect::<Result<_>>()?
            }
        };
        for (setting, train, test) in &tasks {
            for &method in methods {
                let cfg = config.with_seed(seed).with_algorithm(method);
                let (roc, pr) = evaluate(&cfg, train.values(), test)?;
                entries.push(BenchmarkEntry {
                    method: method.to_string(),
                    setting: setting.clone(),
                    seed,
                    auc_roc: roc,
                    auc_pr: pr,
                });
            }
        }
    }
    Ok(BenchmarkReport {
        suite,
        config_hash: config.hash(),
        seeds: seeds.to_vec(),
        summary: summarize(&entries),
        entries,
    })
}

/// Per (method, setting) means and deviations, in first-seen order.
pub fn summarize(entries: &[BenchmarkEntry]) -> Vec<BenchmarkSummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for e in entries {
        let k = (e.method.clone(), e.setting.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, setting)| {
            let group: Vec<&BenchmarkEntry> =
                entries.iter().filter(|e| e.method == method && e.setting == setting).collect();
            let roc: Vec<f64> = group.iter().map(|e| e.auc_roc).collect();
            let pr: Vec<f64> = group.iter().map(|e| e.auc_pr).collect();
            let ((rm, rs), (pm, ps)) = (mean_std(&roc), mean_std(&pr));
            BenchmarkSummary {
                method,
                setting,
                n_seeds: group.len(),
                auc_roc_mean: rm,
                auc_roc_std: rs,
                auc_pr_mean: pm,
                auc_pr_std: ps,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub d: usize,
    /// Median of `runs`.
    pub seconds: f64,
    pub runs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<ScalingRow>,
}

/// Hidden widths used by the scaling sweep when the config leaves them on `auto`.
pub const SCALING_HIDDEN: [usize; 2] = [64, 64];

/// Times `fit` on every dataset of the scaling suite, `repeats` times each.
///
/// A width that grows with `D` would make the cost quadratic in `D`, so an
/// `auto` hidden setting is replaced by [`SCALING_HIDDEN`].
pub fn cmd_scaling(config: &RunConfig, sizes: &[usize], dims: &[usize], repeats: usize) -> Result<ScalingReport> {
    if repeats == 0 {
        return Err(Error::config("need at least one repeat"));
    }
    let mut config = config.clone();
    if config.hidden.is_none() {
        config.hidden = Some(SCALING_HIDDEN.to_vec());
    }
    let suite = gen_scaling_suite(sizes, dims, config.seed);
    let mut rows = Vec::new();
    for (i, &(n, d)) in suite.shapes().iter().enumerate() {
        let data = suite.dataset(i);
        let mut runs = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let model = fit_model(data.values(), &config)?;
            runs.push(start.elapsed().as_secs_f64());
            drop(model);
        }
        let mut sorted = runs.clone();
        sorted.sort_by(f64::total_cmp);
        rows.push(ScalingRow {
            n,
            d,
            seconds: sorted[sorted.len() / 2],
            runs,
        });
    }
    Ok(ScalingReport {
        config_hash: config.hash(),
        seed: config.seed,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub datasets: Vec<String>,
    /// Largest score gap over every dataset; 0 when the reduction holds.
    pub iforest_max_diff: f64,
    /// Smallest agreement rate over every dataset; 1 when the reduction holds.
    pub eif_predicate_agreement: f64,
    pub iforest: Vec<IForestReduction>,
    pub eif: Vec<EifReduction>,
    pub passed: bool,
}

/// Runs both reduction checks on each dataset. `corrupt` perturbs one
/// baseline split to show that the check fails when it should.
pub fn cmd_verify(datasets: &[DataMatrix], seed: u64, params: ReductionParams, corrupt: bool) -> Result<VerifyReport> {
    let mut iforest = Vec::new();
    let mut eif = Vec::new();
    for d in datasets {
        iforest.push(verify_iforest_reduction_with(d.values(), seed, params, corrupt)?);
        eif.push(verify_eif_reduction_with(d.values(), seed, params)?);
    }
    let iforest_max_diff = iforest.iter().map(|r| r.max_abs_diff).fold(0.0, f64::max);
    let eif_predicate_agreement = eif
        .iter()
        .map(|r| r.node_agreement.min(r.triple_agreement))
        .fold(1.0, f64::min);
    let passed = iforest.iter().all(|r| r.passed) && eif.iter().all(|r| r.passed);
    Ok(VerifyReport {
        seed,
        datasets: datasets.iter().map(|d| d.source().to_string()).collect(),
        iforest_max_diff,
        eif_predicate_agreement,
        iforest,
        eif,
        passed,
    })
}

/// The generated datasets `verify` uses when no file is given.
pub fn default_verify_datasets(seed: u64) -> Result<Vec<DataMatrix>> {
    Ok(vec![
        gen_ring(&RingParams::default(), seed)?,
        Scenario::blobs(BlobKind::TwoBlob).generate(seed)?,
        Scenario::blobs(BlobKind::Sinusoid).generate(seed)?,
    ])
}

/// Sidecar written next to a score-map CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMapMeta {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub resolution: usize,
    pub bounds: Bounds,
    pub threshold: f64,
    pub config_hash: String,
    pub seed: u64,
}

/// Fits the configured algorithm on a generated 2-D scenario and scores a lattice around it.
pub fn cmd_score_map(config: &RunConfig, scenario: &Scenario, resolution: usize) -> Result<(ScoreMap, ScoreMapMeta)> {
    let data = scenario.generate(config.seed)?;
    let model = fit_model(data.values(), config)?;
    let bounds = Bounds::around(data.values(), 0.15)?;
    let detector = model.model.detector(config.mode);
    let map = score_map_grid(detector.as_ref(), data.values(), bounds, resolution)?;
    let meta = ScoreMapMeta {
        dataset: scenario.name(),
        algorithm: config.algorithm,
        resolution,
        bounds,
        threshold: map.threshold,
        config_hash: config.hash(),
        seed: config.seed,
    };
    Ok((map, meta))
}

/// Writes `text` to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}
