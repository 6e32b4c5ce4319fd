//! Dense matrices, activations and seeded random streams.

mod activation;
mod matrix;
mod rng;

pub use activation::Activation;
pub use matrix::Matrix;
pub use rng::{sample_matrix, InitDistribution, RngStream};
