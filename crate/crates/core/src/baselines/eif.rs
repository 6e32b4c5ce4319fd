use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BaselineConfig;
use crate::error::{Error, Result};
use crate::math::{Matrix, RngStream};
use crate::representation::ColumnStats;
use crate::scoring::{average_path_length, depth_score, Detector, ScoreSummary};

/// `(o - p) · k`: non-positive sends `o` to the left child.
#[inline]
pub fn hyperplane_side(o: &[f64], intercept: &[f64], normal: &[f64]) -> f64 {
    o.iter()
        .zip(intercept)
        .zip(normal)
        .map(|((o, p), k)| (o - p) * k)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EifNode {
    Leaf {
        size: u32,
        depth: u32,
    },
    Split {
        /// Slope `k`, entries drawn from N(0, 1).
        normal_vector: Vec<f64>,
        /// Point `p` the hyper-plane passes through, inside the pool's ranges.
        intercept_point: Vec<f64>,
        size: u32,
        depth: u32,
        left: Box<EifNode>,
        right: Box<EifNode>,
    },
}

impl EifNode {
    pub fn size(&self) -> u32 {
        match self {
            EifNode::Leaf { size, .. } | EifNode::Split { size, .. } => *size,
        }
    }

    pub fn depth(&self) -> u32 {
        match self {
            EifNode::Leaf { depth, .. } | EifNode::Split { depth, .. } => *depth,
        }
    }
}

/// Extended isolation tree at full extension level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EifTree {
    pub root: EifNode,
    pub subsample: Vec<usize>,
}

impl EifTree {
    pub fn grow(x: &Matrix, subsample_size: usize, depth_limit: u32, rng: &mut RngStream) -> Self {
        let subsample = rng.sample_indices(x.rows(), subsample_size);
        let root = grow(x, subsample.clone(), 0, depth_limit, rng);
        Self { root, subsample }
    }

    pub fn locate(&self, o: &[f64]) -> (u32, u32) {
        let mut node = &self.root;
        loop {
            match node {
                EifNode::Leaf { size, depth } => return (*depth, *size),
                EifNode::Split {
                    normal_vector,
                    intercept_point,
                    left,
                    right,
                    ..
                } => {
                    node = if hyperplane_side(o, intercept_point, normal_vector) <= 0.0 {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }
}

fn grow(x: &Matrix, pool: Vec<usize>, depth: u32, limit: u32, rng: &mut RngStream) -> EifNode {
    let size = pool.len() as u32;
    if pool.len() <= 1 || depth >= limit {
        return EifNode::Leaf { size, depth };
    }
    let d = x.cols();
    let ranges: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            pool.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(x.get(i, j)), hi.max(x.get(i, j)))
            })
        })
        .collect();
    if ranges.iter().all(|(lo, hi)| hi <= lo) {
        return EifNode::Leaf { size, depth };
    }
    // a random hyper-plane can miss the pool entirely; redraw a bounded number of times
    for _ in 0..d.max(1) {
        let normal: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let intercept: Vec<f64> = ranges.iter().map(|&(lo, hi)| lo + rng.unit() * (hi - lo)).collect();
        let (l, r): (Vec<usize>, Vec<usize>) = pool
            .iter()
            .partition(|&&i| hyperplane_side(x.row(i), &intercept, &normal) <= 0.0);
        if l.is_empty() || r.is_empty() {
            continue;
        }
        return EifNode::Split {
            left: Box::new(grow(x, l, depth + 1, limit, rng)),
            right: Box::new(grow(x, r, depth + 1, limit, rng)),
            normal_vector: normal,
            intercept_point: intercept,
            size,
            depth,
        };
    }
    EifNode::Leaf { size, depth }
}

/// Extended isolation forest; tree `i` draws from stream `("eif", i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedIsolationForest {
    trees: Vec<EifTree>,
    stats: ColumnStats,
    config: BaselineConfig,
    subsample_size: usize,
}

impl ExtendedIsolationForest {
    pub fn fit(x: &Matrix, config: &BaselineConfig) -> Result<Self> {
        config.validate()?;
        if x.rows() == 0 {
            return Err(Error::input("training data is empty"));
        }
        let stats = ColumnStats::fit(x)?;
        let z = stats.transform(x)?;
        let depth = config.depth_for(z.rows());
        let root = RngStream::from_seed(config.seed);
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|i| EifTree::grow(&z, config.subsample_size, depth, &mut root.derive("eif", &[i as u64])))
            .collect();
        Ok(Self {
            trees,
            stats,
            config: config.clone(),
            subsample_size: config.subsample_size.min(z.rows()),
        })
    }

    pub fn from_parts(trees: Vec<EifTree>, stats: ColumnStats, config: BaselineConfig) -> Result<Self> {
        config.validate()?;
        let subsample_size = trees.first().map_or(0, |t| t.subsample.len());
        if trees.len() != config.n_trees || subsample_size == 0 {
            return Err(Error::Model("tree count does not match configuration".into()));
        }
        Ok(Self {
            trees,
            stats,
            config,
            subsample_size,
        })
    }

    pub fn trees(&self) -> &[EifTree] {
        &self.trees
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn stats(&self) -> &ColumnStats {
        &self.stats
    }

    /// Standardized training data, as the trees saw it.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.stats.transform(x)
    }
}

impl Detector for ExtendedIsolationForest {
    fn input_dim(&self) -> usize {
        self.stats.dim()
    }

    fn score_summary(&self, x: &Matrix) -> Result<Vec<ScoreSummary>> {
        let z = self.stats.transform(x)?;
        let n_trees = self.trees.len() as f64;
        let adjust = self.config.leaf_adjustment;
        Ok((0..z.rows())
            .into_par_iter()
            .map(|i| {
                let row = z.row(i);
                let total: f64 = self
                    .trees
                    .iter()
                    .map(|t| {
                        let (depth, size) = t.locate(row);
                        let extra = if adjust { average_path_length(size as usize) } else { 0.0 };
                        f64::from(depth) + extra
                    })
                    .sum();
                let mean_path = total / n_trees;
                ScoreSummary {
                    score: depth_score(mean_path, self.subsample_size),
                    mean_path,
                    mean_deviation: 0.0,
                }
            })
            .collect())
    }
}

/// Fits an extended isolation forest and scores the training rows.
pub fn eif_fit_score(x: &Matrix, config: &BaselineConfig) -> Result<Vec<f64>> {
    ExtendedIsolationForest::fit(x, config)?.score(x)
}
