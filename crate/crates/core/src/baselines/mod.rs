//! Classic and extended isolation forests, and checks that a deep forest
//! reduces to each of them.

mod eif;
mod iforest;

pub use eif::{eif_fit_score, hyperplane_side, EifNode, EifTree, ExtendedIsolationForest};
pub use iforest::{iforest_fit_score, BaselineConfig, INode, ITree, IsolationForest};

use serde::Serialize;

use crate::data::DataMatrix;
use crate::error::Result;
use crate::forest::{DeepForest, ForestConfig};
use crate::math::{Activation, Matrix, RngStream};
use crate::representation::{CereLayer, CereNetwork};
use crate::scoring::{score_dataset, Detector, ScoreMode};

/// Outcome of comparing an identity-network deep forest with a classic forest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IForestReduction {
    pub seed: u64,
    pub n_trees: usize,
    pub subsample_size: usize,
    pub max_abs_diff: f64,
    pub split_sequences_equal: Vec<bool>,
    /// Largest relative gap between `deas / path_only` and the mean deviation.
    pub deviation_factor_max_rel_err: f64,
    pub corrupted: bool,
    pub passed: bool,
}

/// Trees and subsample size used by the reduction checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionParams {
    pub n_trees: usize,
    pub subsample_size: usize,
}

impl Default for ReductionParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_size: 256,
        }
    }
}

/// Identity network, path-only scoring vs. classic forest without leaf adjustment.
pub fn verify_iforest_reduction(data: &DataMatrix, seed: u64) -> Result<IForestReduction> {
    verify_iforest_reduction_with(data.values(), seed, ReductionParams::default(), false)
}

/// As [`verify_iforest_reduction`]; `corrupt` shifts one baseline split to
/// confirm that the check notices.
pub fn verify_iforest_reduction_with(
    x: &Matrix,
    seed: u64,
    params: ReductionParams,
    corrupt: bool,
) -> Result<IForestReduction> {
    let config = ForestConfig {
        representations: 1,
        trees_per_representation: params.n_trees,
        subsample_size: params.subsample_size,
        seed,
        ..ForestConfig::default()
    };
    let deep = DeepForest::fit_with_network(x, CereNetwork::identity(x.cols(), 1)?, &config)?;
    let mut classic = IsolationForest::fit(
        x,
        &BaselineConfig {
            n_trees: params.n_trees,
            subsample_size: params.subsample_size,
            depth_limit: None,
            leaf_adjustment: false,
            seed,
        },
    )?;
    if corrupt {
        // a one-unit shift on standardized data reroutes part of the subsample
        let tree = (0..classic.trees().len()).find(|&i| matches!(classic.trees()[i].root, INode::Split { .. }));
        if let Some(i) = tree {
            classic.perturb_first_split(i, 1.0);
        }
    }

    let path_only = score_dataset(&deep, x, ScoreMode::PathOnly)?;
    let deas = score_dataset(&deep, x, ScoreMode::Deas)?;
    let classic_scores = classic.score(x)?;

    let max_abs_diff = path_only
        .iter()
        .zip(&classic_scores)
        .map(|(a, b)| (a.final_score - b).abs())
        .fold(0.0, f64::max);
    let split_sequences_equal: Vec<bool> = deep
        .trees()
        .iter()
        .zip(classic.trees())
        .map(|(d, c)| {
            let (a, b) = (d.split_sequence(), c.split_sequence());
            a.len() == b.len()
                && a.iter()
                    .zip(&b)
                    .all(|(s, t)| s.dim == t.dim && s.value.to_bits() == t.value.to_bits())
        })
        .collect();
    let deviation_factor_max_rel_err = deas
        .iter()
        .zip(&classic_scores)
        .map(|(d, c)| {
            let ratio = d.final_score / c;
            (ratio - d.mean_deviation).abs() / d.mean_deviation.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    let passed = max_abs_diff == 0.0 && split_sequences_equal.iter().all(|&e| e) && deviation_factor_max_rel_err <= 1e-12;
    Ok(IForestReduction {
        seed,
        n_trees: params.n_trees,
        subsample_size: deep.subsample_size(),
        max_abs_diff,
        split_sequences_equal,
        deviation_factor_max_rel_err,
        corrupted: corrupt,
        passed,
    })
}

/// Outcome of replaying every hyper-plane split as a one-column projection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EifReduction {
    pub seed: u64,
    pub n_trees: usize,
    pub nodes_checked: usize,
    pub decisions_checked: usize,
    pub node_agreement: f64,
    pub random_triples: usize,
    pub triple_agreement: f64,
    pub passed: bool,
}

/// The branch decision a deep forest makes on a one-column projection:
/// `z = o · W` with `W = k` as a `D x 1` layer, against threshold `eta = p · k`.
pub fn projected_decisions(pool: &Matrix, normal: &[f64], intercept: &[f64]) -> Result<Vec<bool>> {
    let d = normal.len();
    let layer = CereLayer::new(
        Matrix::new(d, 1, normal.to_vec())?,
        vec![vec![1.0; d]],
        vec![vec![1.0]],
        Activation::Tanh,
        false,
    )?;
    let z = CereNetwork::from_layers(vec![layer], 0)?.forward_member(pool, 0)?;
    let eta: f64 = intercept.iter().zip(normal).map(|(p, k)| p * k).sum();
    Ok(z.as_slice().iter().map(|&v| v <= eta).collect())
}

/// Fraction of random `(o, k, p)` triples where `o·k <= p·k` and `(o-p)·k <= 0` agree.
pub fn eif_predicate_agreement(dim: usize, triples: usize, rng: &mut RngStream) -> f64 {
    let mut agree = 0;
    for _ in 0..triples {
        let o: Vec<f64> = (0..dim).map(|_| rng.standard_normal() * 3.0).collect();
        let k: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let p: Vec<f64> = (0..dim).map(|_| rng.standard_normal() * 3.0).collect();
        let dot = |a: &[f64]| a.iter().zip(&k).map(|(a, k)| a * k).sum::<f64>();
        if (dot(&o) <= dot(&p)) == (hyperplane_side(&o, &p, &k) <= 0.0) {
            agree += 1;
        }
    }
    if triples == 0 {
        1.0
    } else {
        agree as f64 / triples as f64
    }
}

/// Grows an extended forest on `data` and checks that every split decision is
/// reproduced by a deep-forest style projection on the same node pool.
pub fn verify_eif_reduction(data: &DataMatrix, seed: u64) -> Result<EifReduction> {
    verify_eif_reduction_with(data.values(), seed, ReductionParams::default())
}

pub fn verify_eif_reduction_with(x: &Matrix, seed: u64, params: ReductionParams) -> Result<EifReduction> {
    let forest = ExtendedIsolationForest::fit(
        x,
        &BaselineConfig {
            n_trees: params.n_trees,
            subsample_size: params.subsample_size,
            depth_limit: None,
            leaf_adjustment: false,
            seed,
        },
    )?;
    let z = forest.transform(x)?;
    let (mut nodes, mut decisions, mut agreeing_nodes) = (0usize, 0usize, 0usize);
    for tree in forest.trees() {
        let mut stack = vec![(&tree.root, tree.subsample.clone())];
        while let Some((node, pool)) = stack.pop() {
            let EifNode::Split {
                normal_vector,
                intercept_point,
                left,
                right,
                ..
            } = node
            else {
                continue;
            };
            let projected = projected_decisions(&z.select_rows(&pool), normal_vector, intercept_point)?;
            let mut all = true;
            let (mut l, mut r) = (Vec::new(), Vec::new());
            for (&i, dif_left) in pool.iter().zip(projected) {
                let eif_left = hyperplane_side(z.row(i), intercept_point, normal_vector) <= 0.0;
                all &= eif_left == dif_left;
                if eif_left {
                    l.push(i);
                } else {
                    r.push(i);
                }
            }
            nodes += 1;
            decisions += pool.len();
            agreeing_nodes += usize::from(all);
            stack.push((right, r));
            stack.push((left, l));
        }
    }
    let triples = 500;
    let triple_agreement = eif_predicate_agreement(x.cols(), triples, &mut RngStream::from_seed(seed).derive("eif-triples", &[]));
    let node_agreement = if nodes == 0 { 1.0 } else { agreeing_nodes as f64 / nodes as f64 };
    Ok(EifReduction {
        seed,
        n_trees: params.n_trees,
        nodes_checked: nodes,
        decisions_checked: decisions,
        node_agreement,
        random_triples: triples,
        triple_agreement,
        passed: node_agreement == 1.0 && triple_agreement == 1.0,
    })
}
