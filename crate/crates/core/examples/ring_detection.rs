//! Fits a deep forest on the ring scenario and compares it with iForest.

use dif::baselines::{iforest_fit_score, BaselineConfig};
use dif::data::{gen_ring, RingParams};
use dif::metrics::{auc_pr, auc_roc, LabeledScores};
use dif::scoring::{score_dataset, ScoreMode};
use dif::{DeepForest, ForestConfig};

fn main() -> dif::Result<()> {
    let seed = 3;
    let data = gen_ring(&RingParams::default(), seed)?;
    let labels = data.require_labels()?;

    let forest = DeepForest::fit(data.values(), &ForestConfig { seed, ..Default::default() })?;
    let rows = score_dataset(&forest, data.values(), ScoreMode::Deas)?;
    let dif: Vec<f64> = rows.iter().map(|b| b.final_score).collect();
    let iforest = iforest_fit_score(data.values(), &BaselineConfig { seed, ..Default::default() })?;

    for (name, scores) in [("dif", &dif), ("iforest", &iforest)] {
        let ls = LabeledScores::new(scores, labels)?;
        println!("{name:8} auc_roc={:.4} auc_pr={:.4}", auc_roc(&ls), auc_pr(&ls));
    }

    let top = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.final_score.total_cmp(&b.1.final_score))
        .map(|(i, b)| (i, b.clone()))
        .unwrap();
    println!(
        "top object {} (label {}): score {:.4} = {:.4} x {:.4}",
        top.0,
        labels[top.0],
        top.1.final_score,
        top.1.depth_score(forest.subsample_size()),
        top.1.mean_deviation
    );
    Ok(())
}
