//! Detection metrics and representation quality.
//!
//! # Anomaly Isoability Index
//!
//! For each true anomaly `a`, draw an anchor set `C` and a reference set `N`
//! of labelled normals. Then `a` counts as isolated when
//!
//! ```text
//! median_{n_i in N}  mean_{n_j in C}  ( d(a, n_j) - d(n_i, n_j) )  >  0
//! ```
//!
//! with `d` the Euclidean distance in the representation space. The index is
//! the isolated fraction of anomalies. This is the triplet reading: an
//! anomaly should sit farther from the normal anchors than a typical normal
//! does. A literal transcription that subtracts `d(n_j, n_j)` would always
//! subtract zero and is not what is computed here.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::{Matrix, RngStream};

/// Scores with 0 (normal) / 1 (anomaly) ground truth.
#[derive(Debug, Clone, Copy)]
pub struct LabeledScores<'a> {
    pub scores: &'a [f64],
    pub labels: &'a [u8],
}

impl<'a> LabeledScores<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [u8]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Metric("scores contain NaN".into()));
        }
        let n_pos = labels.iter().filter(|&&l| l == 1).count();
        if n_pos == 0 || n_pos == labels.len() {
            return Err(Error::Metric("both classes must be present".into()));
        }
        Ok(Self { scores, labels })
    }

    fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// `(score, positives, negatives)` per distinct score, highest first.
    fn tie_groups(&self) -> Vec<(f64, usize, usize)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut groups: Vec<(f64, usize, usize)> = Vec::new();
        for i in order {
            let s = self.scores[i];
            let pos = usize::from(self.labels[i] == 1);
            match groups.last_mut() {
                Some(g) if g.0 == s => {
                    g.1 += pos;
                    g.2 += 1 - pos;
                }
                _ => groups.push((s, pos, 1 - pos)),
            }
        }
        groups
    }
}

/// Probability that a random anomaly outscores a random normal, ties worth ½.
pub fn auc_roc(ls: &LabeledScores) -> f64 {
    let n_pos = ls.positives() as f64;
    let n_neg = ls.labels.len() as f64 - n_pos;
    // sweep from the lowest score up, counting negatives already passed
    let mut neg_below = 0.0;
    let mut wins = 0.0;
    for (_, pos, neg) in ls.tie_groups().into_iter().rev() {
        wins += pos as f64 * (neg_below + 0.5 * neg as f64);
        neg_below += neg as f64;
    }
    wins / (n_pos * n_neg)
}

/// Average precision: `Σ (R_k - R_{k-1}) P_k` over descending distinct score thresholds.
pub fn auc_pr(ls: &LabeledScores) -> f64 {
    let n_pos = ls.positives() as f64;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for (_, pos, neg) in ls.tie_groups() {
        tp += pos;
        seen += pos + neg;
        if pos > 0 {
            ap += (pos as f64 / n_pos) * (tp as f64 / seen as f64);
        }
    }
    ap
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AiiConfig {
    pub anchors: usize,
    pub references: usize,
}

impl Default for AiiConfig {
    fn default() -> Self {
        Self {
            anchors: 20,
            references: 1000,
        }
    }
}

/// Anomaly Isoability Index of `representation` (rows labelled by `labels`).
///
/// Anchor and reference sets are drawn afresh for every anomaly from stream
/// `("aii", anomaly_row)`, without replacement when enough normals exist.
pub fn aii(representation: &Matrix, labels: &[u8], rng: &RngStream, config: AiiConfig) -> Result<f64> {
    if labels.len() != representation.rows() {
        return Err(Error::Metric("labels do not match representation rows".into()));
    }
    if config.anchors == 0 || config.references == 0 {
        return Err(Error::Metric("anchor and reference sets must be non-empty".into()));
    }
    let normals: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let anomalies: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if anomalies.is_empty() {
        return Err(Error::Metric("AII needs at least one anomaly".into()));
    }
    if normals.is_empty() {
        return Err(Error::Metric("AII needs labelled normals".into()));
    }
    let dist = |a: usize, b: usize| {
        representation
            .row(a)
            .iter()
            .zip(representation.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let isolated = anomalies
        .par_iter()
        .map(|&a| {
            let mut s = rng.derive("aii", &[a as u64]);
            let anchors = draw(&mut s, &normals, config.anchors);
            let refs = draw(&mut s, &normals, config.references);
            let anomaly_mean = anchors.iter().map(|&j| dist(a, j)).sum::<f64>() / anchors.len() as f64;
            let mut margins: Vec<f64> = refs
                .iter()
                .map(|&i| anomaly_mean - anchors.iter().map(|&j| dist(i, j)).sum::<f64>() / anchors.len() as f64)
                .collect();
            median(&mut margins) > 0.0
        })
        .filter(|&iso| iso)
        .count();
    Ok(isolated as f64 / anomalies.len() as f64)
}

fn draw(rng: &mut RngStream, pool: &[usize], k: usize) -> Vec<usize> {
    if pool.len() >= k {
        rng.sample_indices(pool.len(), k).into_iter().map(|i| pool[i]).collect()
    } else {
        (0..k).map(|_| pool[rng.index(pool.len())]).collect()
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub auc_roc: f64,
    pub auc_pr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aii: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}
