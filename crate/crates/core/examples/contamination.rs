//! Trains on increasingly contaminated ring data and tests on the original.

use dif::cli::{cmd_benchmark, Algorithm, RunConfig, Suite};

fn main() -> dif::Result<()> {
    let seeds = [0, 1, 2];
    let report = cmd_benchmark(&RunConfig::default(), Suite::Contamination, &seeds, &[Algorithm::Dif, Algorithm::IForest])?;
    println!("{:8} {:10} {:>8} {:>8}", "method", "setting", "mean", "std");
    for s in &report.summary {
        println!("{:8} {:10} {:8.4} {:8.4}", s.method, s.setting, s.auc_roc_mean, s.auc_roc_std);
    }
    Ok(())
}
