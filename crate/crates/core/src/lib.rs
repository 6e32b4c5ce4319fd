//! Deep isolation forest for unsupervised anomaly detection on tabular data.
//!
//! Data are mapped through an ensemble of frozen, randomly initialised
//! networks whose members share one set of base weights and differ by a
//! rank-one elementwise perturbation. Isolation trees are grown on every
//! member's output, and objects are scored by path length weighted with the
//! mean distance to the split thresholds they crossed.
//!
//! ```
//! use dif::data::{gen_ring, RingParams};
//! use dif::forest::{DeepForest, ForestConfig};
//! use dif::scoring::{score_dataset, ScoreMode};
//!
//! let data = gen_ring(&RingParams { n_normal: 200, n_anomaly: 10, ..Default::default() }, 7).unwrap();
//! let cfg = ForestConfig { representations: 4, trees_per_representation: 2, seed: 7, ..Default::default() };
//! let forest = DeepForest::fit(data.values(), &cfg).unwrap();
//! let scores = score_dataset(&forest, data.values(), ScoreMode::Deas).unwrap();
//! assert_eq!(scores.len(), 210);
//! ```

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod forest;
pub mod math;
pub mod metrics;
pub mod representation;
pub mod scoring;

pub use error::{Error, Result};
pub use forest::{DeepForest, ForestConfig};
pub use scoring::{Detector, ScoreMode};
