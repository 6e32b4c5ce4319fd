//! iForest, extended iForest and the deep forest on every blob scenario.

use dif::baselines::{eif_fit_score, iforest_fit_score, BaselineConfig};
use dif::data::{gen_blobs_with_anomalies, BlobKind};
use dif::metrics::{auc_roc, LabeledScores};
use dif::scoring::{score_dataset, ScoreMode};
use dif::{DeepForest, ForestConfig};

fn main() -> dif::Result<()> {
    let seed = 5;
    println!("{:12} {:>8} {:>8} {:>8}", "scenario", "iforest", "eif", "dif");
    for kind in BlobKind::ALL {
        let data = gen_blobs_with_anomalies(kind, 1000, 30, kind.default_noise(), seed)?;
        let labels = data.require_labels()?;
        let base = BaselineConfig { seed, ..Default::default() };
        let forest = DeepForest::fit(data.values(), &ForestConfig { seed, ..Default::default() })?;
        let dif: Vec<f64> = score_dataset(&forest, data.values(), ScoreMode::Deas)?
            .iter()
            .map(|b| b.final_score)
            .collect();
        let auc = |s: &[f64]| LabeledScores::new(s, labels).map(|ls| auc_roc(&ls));
        println!(
            "{:12} {:8.4} {:8.4} {:8.4}",
            kind.to_string(),
            auc(&iforest_fit_score(data.values(), &base)?)?,
            auc(&eif_fit_score(data.values(), &base)?)?,
            auc(&dif)?
        );
    }
    Ok(())
}
