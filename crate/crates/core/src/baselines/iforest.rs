use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{default_depth_limit, Split, MAX_DEPTH_LIMIT};
use crate::math::{Matrix, RngStream};
use crate::representation::ColumnStats;
use crate::scoring::{average_path_length, depth_score, Detector, ScoreSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub n_trees: usize,
    pub subsample_size: usize,
    /// `None` means `ceil(log2 min(n, N))`.
    pub depth_limit: Option<u32>,
    /// Add `c(leaf size)` to the depth at truncated leaves.
    pub leaf_adjustment: bool,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            n_trees: 300,
            subsample_size: 256,
            depth_limit: None,
            leaf_adjustment: true,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.subsample_size == 0 {
            return Err(Error::config("tree count and subsample size must be at least 1"));
        }
        if matches!(self.depth_limit, Some(j) if j == 0 || j > MAX_DEPTH_LIMIT) {
            return Err(Error::config(format!("depth limit must be in 1..={MAX_DEPTH_LIMIT}")));
        }
        Ok(())
    }

    pub(crate) fn depth_for(&self, n_rows: usize) -> u32 {
        self.depth_limit
            .unwrap_or_else(|| default_depth_limit(self.subsample_size.min(n_rows)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum INode {
    Leaf {
        size: u32,
        depth: u32,
    },
    Split {
        dim: u32,
        value: f64,
        size: u32,
        depth: u32,
        left: Box<INode>,
        right: Box<INode>,
    },
}

impl INode {
    pub fn size(&self) -> u32 {
        match self {
            INode::Leaf { size, .. } | INode::Split { size, .. } => *size,
        }
    }

    pub fn depth(&self) -> u32 {
        match self {
            INode::Leaf { depth, .. } | INode::Split { depth, .. } => *depth,
        }
    }

    fn collect_splits(&self, out: &mut Vec<Split>) {
        if let INode::Split { dim, value, left, right, .. } = self {
            out.push(Split { dim: *dim, value: *value });
            left.collect_splits(out);
            right.collect_splits(out);
        }
    }
}

/// Axis-parallel isolation tree on the original (standardized) features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ITree {
    pub root: INode,
    pub subsample: Vec<usize>,
}

impl ITree {
    /// Draws from `rng` in the same order as a deep-forest tree: subsample,
    /// then preorder nodes, each picking a non-constant dimension and an
    /// open-interval threshold.
    pub fn grow(x: &Matrix, subsample_size: usize, depth_limit: u32, rng: &mut RngStream) -> Self {
        let subsample = rng.sample_indices(x.rows(), subsample_size);
        let root = grow_node(x, subsample.clone(), 0, depth_limit, rng);
        Self { root, subsample }
    }

    /// `(depth, leaf size)` of the leaf `row` lands in.
    pub fn locate(&self, row: &[f64]) -> (u32, u32) {
        let mut node = &self.root;
        loop {
            match node {
                INode::Leaf { size, depth } => return (*depth, *size),
                INode::Split { dim, value, left, right, .. } => {
                    node = if row[*dim as usize] <= *value { left } else { right };
                }
            }
        }
    }

    pub fn split_sequence(&self) -> Vec<Split> {
        let mut out = Vec::new();
        self.root.collect_splits(&mut out);
        out
    }
}

fn grow_node(x: &Matrix, pool: Vec<usize>, depth: u32, limit: u32, rng: &mut RngStream) -> INode {
    let size = pool.len() as u32;
    if pool.len() <= 1 || depth >= limit {
        return INode::Leaf { size, depth };
    }
    let mut candidates = Vec::new();
    for j in 0..x.cols() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &pool {
            lo = lo.min(x.get(i, j));
            hi = hi.max(x.get(i, j));
        }
        if hi > lo {
            candidates.push((j, lo, hi));
        }
    }
    if candidates.is_empty() {
        return INode::Leaf { size, depth };
    }
    for _ in 0..x.cols() {
        let (j, lo, hi) = candidates[rng.index(candidates.len())];
        let Some(value) = rng.open_uniform(lo, hi) else { continue };
        let (l, r): (Vec<usize>, Vec<usize>) = pool.iter().partition(|&&i| x.get(i, j) <= value);
        if l.is_empty() || r.is_empty() {
            continue;
        }
        let left = grow_node(x, l, depth + 1, limit, rng);
        let right = grow_node(x, r, depth + 1, limit, rng);
        return INode::Split {
            dim: j as u32,
            value,
            size,
            depth,
            left: Box::new(left),
            right: Box::new(right),
        };
    }
    INode::Leaf { size, depth }
}

/// Classic isolation forest.
///
/// Tree `i` draws from stream `("itree", 0, i)` of the seed, the same stream a
/// deep forest with one representation uses for its tree `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<ITree>,
    stats: ColumnStats,
    config: BaselineConfig,
    subsample_size: usize,
}

impl IsolationForest {
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
            .map(|i| ITree::grow(&z, config.subsample_size, depth, &mut root.derive("itree", &[0, i as u64])))
            .collect();
        Ok(Self {
            trees,
            stats,
            config: config.clone(),
            subsample_size: config.subsample_size.min(z.rows()),
        })
    }

    pub fn from_parts(trees: Vec<ITree>, stats: ColumnStats, config: BaselineConfig) -> Result<Self> {
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

    pub fn trees(&self) -> &[ITree] {
        &self.trees
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn stats(&self) -> &ColumnStats {
        &self.stats
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    /// Moves the first split threshold of tree `tree` by `delta`. Used to check
    /// that equivalence checks catch a corrupted model.
    #[doc(hidden)]
    pub fn perturb_first_split(&mut self, tree: usize, delta: f64) -> bool {
        if let INode::Split { value, .. } = &mut self.trees[tree].root {
            *value += delta;
            true
        } else {
            false
        }
    }
}

impl Detector for IsolationForest {
    fn input_dim(&self) -> usize {
        self.stats.dim()
    }

    fn score_summary(&self, x: &Matrix) -> Result<Vec<ScoreSummary>> {
        let z = self.stats.transform(x)?;
        let adjust = self.config.leaf_adjustment;
        let n_trees = self.trees.len() as f64;
        Ok((0..z.rows())
            .into_par_iter()
            .map(|i| {
                let row = z.row(i);
                let mean_path = if adjust {
                    self.trees
                        .iter()
                        .map(|t| {
                            let (depth, size) = t.locate(row);
                            f64::from(depth) + average_path_length(size as usize)
                        })
                        .sum::<f64>()
                        / n_trees
                } else {
                    self.trees.iter().map(|t| u64::from(t.locate(row).0)).sum::<u64>() as f64 / n_trees
                };
                ScoreSummary {
                    score: depth_score(mean_path, self.subsample_size),
                    mean_path,
                    mean_deviation: 0.0,
                }
            })
            .collect())
    }
}

/// Fits a classic isolation forest and scores the training rows.
pub fn iforest_fit_score(x: &Matrix, config: &BaselineConfig) -> Result<Vec<f64>> {
    IsolationForest::fit(x, config)?.score(x)
}
