//! AUC-ROC, AUC-PR and the isolation index of a learned representation.

use dif::data::{gen_ring, RingParams};
use dif::math::{Matrix, RngStream};
use dif::metrics::{aii, auc_pr, auc_roc, AiiConfig, LabeledScores};
use dif::{DeepForest, ForestConfig};

fn main() -> dif::Result<()> {
    let ls = LabeledScores::new(&[0.9, 0.8, 0.7, 0.3, 0.2], &[1, 0, 1, 0, 0])?;
    println!("toy: auc_roc={:.4} auc_pr={:.4}", auc_roc(&ls), auc_pr(&ls));

    let data = gen_ring(&RingParams::default(), 2)?;
    let labels = data.require_labels()?;
    let rng = RngStream::from_seed(2);
    println!("raw input: aii={:.3}", aii(data.values(), labels, &rng, AiiConfig::default())?);

    let forest = DeepForest::fit(data.values(), &ForestConfig { representations: 5, seed: 2, ..Default::default() })?;
    let reps = forest.represent(data.values())?;
    for u in 0..reps.len() {
        let z: &Matrix = reps.member(u);
        println!("member {u}: aii={:.3}", aii(z, labels, &rng, AiiConfig::default())?);
    }
    Ok(())
}
