//! Isolation trees grown on projected data, and the deep forest that owns them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::math::{Matrix, RngStream};
use crate::representation::{
    build_network, CereNetwork, ColumnStats, NetworkSpec, RepresentationSet, DEFAULT_BATCH_SIZE,
};
use crate::scoring::TraversalRecord;

/// Largest depth limit; heap node ids must fit in a `u64`.
pub const MAX_DEPTH_LIMIT: u32 = 62;

/// Default depth limit for a subsample of `n` objects: `ceil(log2 n)`, at least 1.
pub fn default_depth_limit(n: usize) -> u32 {
    let mut depth = 0;
    while (1usize << depth) < n {
        depth += 1;
    }
    depth.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub dim: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Heap id: the root is 1 and the children of `k` are `2k` and `2k + 1`.
    pub node_id: u64,
    pub depth: u32,
    /// Number of subsample objects that reached this node during construction.
    pub size: u32,
    /// Present on internal nodes only.
    pub split: Option<Split>,
    /// Storage indices of the `<=` and `>` children.
    pub children: Option<(u32, u32)>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// Path taken by one object through one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Traversal {
    /// Heap ids of the nodes entered after each decision, root excluded.
    pub path: Vec<u64>,
    pub path_length: u32,
    pub deviation_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    nodes: Vec<TreeNode>,
    representation_index: usize,
    subsample: Vec<usize>,
    depth_limit: u32,
    width: usize,
}

impl IsolationTree {
    pub fn from_parts(
        nodes: Vec<TreeNode>,
        representation_index: usize,
        subsample: Vec<usize>,
        depth_limit: u32,
        width: usize,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Model("tree without nodes".into()));
        }
        for node in &nodes {
            match (node.split, node.children) {
                (None, None) => {}
                (Some(s), Some((l, r))) => {
                    if s.dim as usize >= width || l as usize >= nodes.len() || r as usize >= nodes.len() {
                        return Err(Error::Model(format!("node {} references out of range", node.node_id)));
                    }
                }
                _ => return Err(Error::Model(format!("node {} half internal", node.node_id))),
            }
        }
        Ok(Self {
            nodes,
            representation_index,
            subsample,
            depth_limit,
            width,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn representation_index(&self) -> usize {
        self.representation_index
    }

    /// Row indices (into the training data) of the root pool.
    pub fn subsample(&self) -> &[usize] {
        &self.subsample
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample.len()
    }

    pub fn depth_limit(&self) -> u32 {
        self.depth_limit
    }

    /// Width of the representation the tree partitions.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Splits in preorder, the order in which they were drawn.
    pub fn split_sequence(&self) -> Vec<Split> {
        self.nodes.iter().filter_map(|n| n.split).collect()
    }

    /// Routes `x` to a leaf. Goes left iff `x[dim] <= value`; each decision adds
    /// `|x[dim] - value|` at the deciding node to the deviation sum.
    pub fn traverse(&self, x: &[f64]) -> Result<Traversal> {
        if x.len() != self.width {
            return Err(Error::shape(format!(
                "tree splits {}-dimensional points, got {}",
                self.width,
                x.len()
            )));
        }
        let mut path = Vec::new();
        let mut deviation_sum = 0.0;
        let mut node = &self.nodes[0];
        while let (Some(split), Some((left, right))) = (node.split, node.children) {
            let v = x[split.dim as usize];
            deviation_sum += (v - split.value).abs();
            node = &self.nodes[if v <= split.value { left } else { right } as usize];
            path.push(node.node_id);
        }
        Ok(Traversal {
            path_length: path.len() as u32,
            path,
            deviation_sum,
        })
    }

    /// Allocation-free traversal; `x` must have the tree's width.
    #[inline]
    pub(crate) fn record(&self, x: &[f64], tree_index: usize) -> TraversalRecord {
        let mut path_length = 0;
        let mut deviation_sum = 0.0;
        let mut node = &self.nodes[0];
        while let (Some(split), Some((left, right))) = (node.split, node.children) {
            let v = x[split.dim as usize];
            deviation_sum += (v - split.value).abs();
            node = &self.nodes[if v <= split.value { left } else { right } as usize];
            path_length += 1;
        }
        TraversalRecord {
            path_length,
            deviation_sum,
            tree_index,
        }
    }
}

/// Grows one isolation tree on `rep`.
///
/// Draw order: the root subsample (`min(n, N)` rows without replacement),
/// then nodes in preorder, left child first. A node of more than one object
/// above the depth limit picks a dimension uniformly among those that are
/// not constant in its pool, then a threshold uniformly in the open
/// `(min, max)` of that dimension.
pub fn build_tree(rep: &Matrix, n: usize, depth_limit: u32, rng: &mut RngStream) -> Result<IsolationTree> {
    build_tree_for(rep, 0, n, depth_limit, rng)
}

fn build_tree_for(
    rep: &Matrix,
    representation_index: usize,
    n: usize,
    depth_limit: u32,
    rng: &mut RngStream,
) -> Result<IsolationTree> {
    if rep.rows() == 0 || rep.cols() == 0 {
        return Err(Error::input("cannot build a tree on an empty representation"));
    }
    if n == 0 || depth_limit == 0 || depth_limit > MAX_DEPTH_LIMIT {
        return Err(Error::config(format!(
            "subsample size must be >= 1 and depth limit in 1..={MAX_DEPTH_LIMIT}"
        )));
    }
    let subsample = rng.sample_indices(rep.rows(), n);
    let mut builder = TreeBuilder {
        rep,
        depth_limit,
        rng,
        nodes: Vec::new(),
    };
    let mut pool = subsample.clone();
    builder.grow(&mut pool, 1, 0);
    Ok(IsolationTree {
        nodes: builder.nodes,
        representation_index,
        subsample,
        depth_limit,
        width: rep.cols(),
    })
}

struct TreeBuilder<'a> {
    rep: &'a Matrix,
    depth_limit: u32,
    rng: &'a mut RngStream,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, pool: &mut [usize], node_id: u64, depth: u32) -> u32 {
        let slot = self.nodes.len();
        self.nodes.push(TreeNode {
            node_id,
            depth,
            size: pool.len() as u32,
            split: None,
            children: None,
        });
        if pool.len() <= 1 || depth >= self.depth_limit {
            return slot as u32;
        }
        let Some((split, n_left)) = self.choose_split(pool) else {
            return slot as u32;
        };
        let (left_pool, right_pool) = pool.split_at_mut(n_left);
        let left = self.grow(left_pool, 2 * node_id, depth + 1);
        let right = self.grow(right_pool, 2 * node_id + 1, depth + 1);
        let node = &mut self.nodes[slot];
        node.split = Some(split);
        node.children = Some((left, right));
        slot as u32
    }

    /// Picks a split and partitions `pool` in place (`<=` side first, order kept).
    fn choose_split(&mut self, pool: &mut [usize]) -> Option<(Split, usize)> {
        let width = self.rep.cols();
        let ranges: Vec<(usize, f64, f64)> = (0..width)
            .filter_map(|j| {
                let (lo, hi) = pool.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = self.rep.get(i, j);
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return None;
        }
        for _ in 0..width {
            let (dim, lo, hi) = ranges[self.rng.index(ranges.len())];
            let Some(value) = self.rng.open_uniform(lo, hi) else {
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) =
                pool.iter().partition(|&&i| self.rep.get(i, dim) <= value);
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let n_left = left.len();
            pool[..n_left].copy_from_slice(&left);
            pool[n_left..].copy_from_slice(&right);
            return Some((Split { dim: dim as u32, value }, n_left));
        }
        None
    }
}

/// Construction parameters of a [`DeepForest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    /// Number of representations `r`.
    pub representations: usize,
    /// Trees per representation `t`.
    pub trees_per_representation: usize,
    /// Subsample size `n` per tree.
    pub subsample_size: usize,
    /// Depth limit `J`; `None` means `ceil(log2 min(n, N))`.
    pub depth_limit: Option<u32>,
    pub network: NetworkSpec,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            representations: 50,
            trees_per_representation: 6,
            subsample_size: 256,
            depth_limit: None,
            network: NetworkSpec::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<()> {
        if self.representations == 0
            || self.trees_per_representation == 0
            || self.subsample_size == 0
            || self.batch_size == 0
        {
            return Err(Error::config("r, t, n and batch size must all be at least 1"));
        }
        if let Some(j) = self.depth_limit {
            if j == 0 || j > MAX_DEPTH_LIMIT {
                return Err(Error::config(format!("depth limit must be in 1..={MAX_DEPTH_LIMIT}")));
            }
        }
        Ok(())
    }

    pub fn total_trees(&self) -> usize {
        self.representations * self.trees_per_representation
    }
}

/// Frozen network, training statistics and `r · t` isolation trees.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepForest {
    network: CereNetwork,
    trees: Vec<IsolationTree>,
    config: ForestConfig,
    training_stats: ColumnStats,
}

impl DeepForest {
    /// Standardizes `x`, samples the network from `config.seed` and grows the trees.
    pub fn fit(x: &Matrix, config: &ForestConfig) -> Result<Self> {
        config.validate()?;
        let root = RngStream::from_seed(config.seed);
        let network = build_network(x.cols(), &config.network, config.representations, &root)?;
        Self::fit_with_network(x, network, config)
    }

    /// As [`fit`](Self::fit) with a caller-supplied network.
    pub fn fit_with_network(x: &Matrix, network: CereNetwork, config: &ForestConfig) -> Result<Self> {
        config.validate()?;
        if x.rows() == 0 {
            return Err(Error::input("training data is empty"));
        }
        if network.ensemble_size() != config.representations {
            return Err(Error::config(format!(
                "network has {} members but r = {}",
                network.ensemble_size(),
                config.representations
            )));
        }
        let training_stats = ColumnStats::fit(x)?;
        let reps = network.forward_ensemble(&training_stats.transform(x)?, config.batch_size)?;
        let trees = grow_trees(&reps, config)?;
        Ok(Self {
            network,
            trees,
            config: config.clone(),
            training_stats,
        })
    }

    pub fn from_parts(
        network: CereNetwork,
        trees: Vec<IsolationTree>,
        config: ForestConfig,
        training_stats: ColumnStats,
    ) -> Result<Self> {
        config.validate()?;
        let t = config.trees_per_representation;
        if trees.len() != config.total_trees() {
            return Err(Error::Model(format!("expected {} trees, found {}", config.total_trees(), trees.len())));
        }
        for (k, tree) in trees.iter().enumerate() {
            if tree.representation_index() != k / t || tree.width() != network.output_dim() {
                return Err(Error::Model(format!("tree {k} does not match its representation")));
            }
        }
        if training_stats.dim() != network.input_dim() || network.ensemble_size() != config.representations {
            return Err(Error::Model("network, statistics and config disagree".into()));
        }
        Ok(Self {
            network,
            trees,
            config,
            training_stats,
        })
    }

    pub fn network(&self) -> &CereNetwork {
        &self.network
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn training_stats(&self) -> &ColumnStats {
        &self.training_stats
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    /// Effective subsample size shared by all trees.
    pub fn subsample_size(&self) -> usize {
        self.trees[0].subsample_size()
    }

    /// Standardizes with the training statistics and projects through every member.
    pub fn represent(&self, x: &Matrix) -> Result<RepresentationSet> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "model expects {} features, data has {}",
                self.input_dim(),
                x.cols()
            )));
        }
        self.network
            .forward_ensemble(&self.training_stats.transform(x)?, self.config.batch_size)
    }
}

/// Grows `t` trees on every representation; tree `(u, i)` draws from stream `("itree", u, i)`.
fn grow_trees(reps: &RepresentationSet, config: &ForestConfig) -> Result<Vec<IsolationTree>> {
    let root = RngStream::from_seed(config.seed);
    let t = config.trees_per_representation;
    let n_rows = reps.member(0).rows();
    let depth_limit = config
        .depth_limit
        .unwrap_or_else(|| default_depth_limit(config.subsample_size.min(n_rows)));
    (0..reps.len() * t)
        .into_par_iter()
        .map(|k| {
            let (u, i) = (k / t, k % t);
            let mut rng = root.derive("itree", &[u as u64, i as u64]);
            build_tree_for(reps.member(u), u, config.subsample_size, depth_limit, &mut rng)
        })
        .collect()
}

/// Fits a deep forest on the feature values of `data`.
pub fn build_forest(data: &DataMatrix, config: &ForestConfig) -> Result<DeepForest> {
    DeepForest::fit(data.values(), config)
}
