//! One batched pass over a rank-one ensemble equals running each member
//! with its explicit weight matrix.

use dif::math::{Activation, Matrix, RngStream};
use dif::representation::{build_network, NetworkSpec};

fn main() -> dif::Result<()> {
    let rng = RngStream::from_seed(11);
    let x = Matrix::from_fn(200, 6, |i, j| ((i * 7 + j * 3) % 17) as f64 / 8.0 - 1.0);
    let spec = NetworkSpec {
        hidden: Some(vec![12]),
        output_dim: 4,
        activation: Activation::Tanh,
        ..Default::default()
    };
    let net = build_network(6, &spec, 8, &rng)?;
    let batched = net.forward_ensemble(&x, 64)?;

    let mut worst = 0.0f64;
    for u in 0..net.ensemble_size() {
        let mut h = x.clone();
        for layer in net.layers() {
            h = h.matmul(&layer.materialize_weights(u))?;
            if layer.applies_activation() {
                h = layer.activation().apply(&h);
            }
        }
        let z = batched.member(u);
        for (a, b) in z.as_slice().iter().zip(h.as_slice()) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    println!(
        "{} members, {} layers, max relative gap vs explicit weights: {worst:e}",
        net.ensemble_size(),
        net.layers().len()
    );
    Ok(())
}
