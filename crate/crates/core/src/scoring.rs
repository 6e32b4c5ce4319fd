//! Path-length and deviation-enhanced anomaly scores.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::forest::DeepForest;
use crate::math::Matrix;

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Outcome of routing one object through one tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraversalRecord {
    /// Number of split decisions taken.
    pub path_length: u32,
    /// Sum of `|x[dim] - threshold|` over those decisions.
    pub deviation_sum: f64,
    pub tree_index: usize,
}

/// Per-tree deviation averaged over the decisions taken; 0 for a root leaf.
pub fn avg_deviation(rec: &TraversalRecord) -> f64 {
    if rec.path_length == 0 {
        0.0
    } else {
        rec.deviation_sum / f64::from(rec.path_length)
    }
}

/// Average unsuccessful-search path length of a BST over `n` keys, `c(n)`.
///
/// Exact zero for `n <= 1`; used as the classic truncated-leaf adjustment.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

/// Path-length normaliser `c(n)` with `c(1)` taken as 1 so it can divide.
pub fn normalizer(n: usize) -> f64 {
    if n <= 1 {
        1.0
    } else {
        average_path_length(n)
    }
}

/// `2^(-mean_path / c(n))`.
pub fn depth_score(mean_path: f64, subsample_size: usize) -> f64 {
    (-mean_path / normalizer(subsample_size)).exp2()
}

fn mean_path(records: &[TraversalRecord]) -> f64 {
    let total: u64 = records.iter().map(|r| u64::from(r.path_length)).sum();
    total as f64 / records.len() as f64
}

/// Mean of per-tree deviations, summed in sorted order so tree order cannot
/// change the result.
fn mean_deviation(records: &[TraversalRecord]) -> f64 {
    let mut g: Vec<f64> = records.iter().map(avg_deviation).collect();
    g.sort_by(f64::total_cmp);
    g.iter().sum::<f64>() / g.len() as f64
}

/// Classic isolation score from path lengths alone.
pub fn iforest_score(records: &[TraversalRecord], subsample_size: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::input("no traversal records to score"));
    }
    Ok(depth_score(mean_path(records), subsample_size))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ScoreMode {
    /// Depth score times mean deviation.
    #[default]
    Deas,
    /// Depth score only.
    PathOnly,
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::Deas => "deas",
            ScoreMode::PathOnly => "path-only",
        })
    }
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "deas" => Ok(ScoreMode::Deas),
            "path-only" | "path" => Ok(ScoreMode::PathOnly),
            other => Err(Error::config(format!("unknown scoring mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    /// Empty when records were not requested.
    pub per_tree: Vec<TraversalRecord>,
    pub mean_path: f64,
    pub mean_deviation: f64,
    pub final_score: f64,
}

impl ScoreBreakdown {
    fn from_records(records: Vec<TraversalRecord>, subsample_size: usize, mode: ScoreMode) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::input("no traversal records to score"));
        }
        let mean_path = mean_path(&records);
        let mean_deviation = mean_deviation(&records);
        let depth = depth_score(mean_path, subsample_size);
        let final_score = match mode {
            ScoreMode::Deas => depth * mean_deviation,
            ScoreMode::PathOnly => depth,
        };
        Ok(Self {
            per_tree: records,
            mean_path,
            mean_deviation,
            final_score,
        })
    }

    /// The path-only factor of the score.
    pub fn depth_score(&self, subsample_size: usize) -> f64 {
        depth_score(self.mean_path, subsample_size)
    }
}

/// Deviation-enhanced score: `2^(-E[path] / c(n)) * E[g]`.
pub fn deas_score(records: &[TraversalRecord], subsample_size: usize) -> Result<ScoreBreakdown> {
    ScoreBreakdown::from_records(records.to_vec(), subsample_size, ScoreMode::Deas)
}

/// Scores every row of `x` against `forest`, keeping per-tree records.
pub fn score_dataset(forest: &DeepForest, x: &Matrix, mode: ScoreMode) -> Result<Vec<ScoreBreakdown>> {
    score_rows(forest, x, mode, true)
}

/// As [`score_dataset`] for a [`DataMatrix`].
pub fn score_data(forest: &DeepForest, data: &DataMatrix, mode: ScoreMode) -> Result<Vec<ScoreBreakdown>> {
    score_dataset(forest, data.values(), mode)
}

pub(crate) fn score_rows(
    forest: &DeepForest,
    x: &Matrix,
    mode: ScoreMode,
    keep_records: bool,
) -> Result<Vec<ScoreBreakdown>> {
    let reps = forest.represent(x)?;
    let n = forest.subsample_size();
    (0..x.rows())
        .into_par_iter()
        .map(|row| {
            let records: Vec<TraversalRecord> = forest
                .trees()
                .iter()
                .enumerate()
                .map(|(k, tree)| tree.record(reps.member(tree.representation_index()).row(row), k))
                .collect();
            let mut b = ScoreBreakdown::from_records(records, n, mode)?;
            if !keep_records {
                b.per_tree = Vec::new();
            }
            Ok(b)
        })
        .collect()
}

/// Something that turns rows into anomaly scores (higher is more anomalous).
pub trait Detector {
    fn input_dim(&self) -> usize;

    /// Per-row `(score, mean_path, mean_deviation)`.
    fn score_summary(&self, x: &Matrix) -> Result<Vec<ScoreSummary>>;

    fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.score_summary(x)?.into_iter().map(|s| s.score).collect())
    }
}

impl<T: Detector + ?Sized> Detector for &T {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn score_summary(&self, x: &Matrix) -> Result<Vec<ScoreSummary>> {
        (**self).score_summary(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub score: f64,
    pub mean_path: f64,
    pub mean_deviation: f64,
}

/// A deep forest paired with the scoring mode to use.
#[derive(Debug, Clone, Copy)]
pub struct ScoredForest<'a> {
    pub forest: &'a DeepForest,
    pub mode: ScoreMode,
}

impl Detector for ScoredForest<'_> {
    fn input_dim(&self) -> usize {
        self.forest.input_dim()
    }

    fn score_summary(&self, x: &Matrix) -> Result<Vec<ScoreSummary>> {
        Ok(score_rows(self.forest, x, self.mode, false)?
            .into_iter()
            .map(|b| ScoreSummary {
                score: b.final_score,
                mean_path: b.mean_path,
                mean_deviation: b.mean_deviation,
            })
            .collect())
    }
}

/// Provenance line written at the top of every CSV artifact.
pub fn provenance_comment(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}")
}

/// Writes `object_id,score,mean_path,mean_deviation` rows after a provenance comment.
pub fn write_scores_csv<W: Write>(mut out: W, rows: &[ScoreSummary], config_hash: &str, seed: u64) -> Result<()> {
    writeln!(out, "{}", provenance_comment(config_hash, seed))?;
    writeln!(out, "object_id,score,mean_path,mean_deviation")?;
    for (i, s) in rows.iter().enumerate() {
        writeln!(out, "{i},{:?},{:?},{:?}", s.score, s.mean_path, s.mean_deviation)?;
    }
    Ok(())
}

/// One JSON object per row with the same fields as the CSV, plus provenance.
pub fn write_scores_jsonl<W: Write>(mut out: W, rows: &[ScoreSummary], config_hash: &str, seed: u64) -> Result<()> {
    for (i, s) in rows.iter().enumerate() {
        let line = serde_json::json!({
            "object_id": i,
            "score": s.score,
            "mean_path": s.mean_path,
            "mean_deviation": s.mean_deviation,
            "config_hash": config_hash,
            "seed": seed,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}
