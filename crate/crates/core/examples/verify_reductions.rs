//! Checks that an identity-network deep forest is a classic iForest and
//! that hyper-plane splits are thresholds on a one-dimensional projection.

use dif::baselines::ReductionParams;
use dif::cli::{cmd_verify, default_verify_datasets};

fn main() -> dif::Result<()> {
    let seed = 9;
    let data = default_verify_datasets(seed)?;
    let params = ReductionParams::default();
    for corrupt in [false, true] {
        let r = cmd_verify(&data, seed, params, corrupt)?;
        println!(
            "corrupt={corrupt:5} iforest_max_diff={:e} eif_predicate_agreement={} passed={}",
            r.iforest_max_diff, r.eif_predicate_agreement, r.passed
        );
    }
    Ok(())
}
