//! Optimisation-free random representation ensembles.
//!
//! A [`CereNetwork`] holds one base weight matrix per layer plus `r` pairs of
//! rank-one perturbation vectors `(p_u, q_u)`. Member `u` behaves as an MLP
//! with weights `W0 ∘ (p_u q_uᵀ)`, but the product is never formed: a layer
//! computes `((x ∘ p_u) · W0) ∘ q_u`. [`CereNetwork::forward_ensemble`] runs
//! all `r` members through one stacked multiplication per layer and
//! mini-batch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sample_matrix, Activation, InitDistribution, Matrix, RngStream};

/// Default mini-batch size for ensemble forward passes.
pub const DEFAULT_BATCH_SIZE: usize = 64;
/// Default width of the final representation.
pub const DEFAULT_OUTPUT_DIM: usize = 16;

/// Hidden width used when none is configured: `max(16, min(500, D))`.
pub fn default_hidden_width(input_dim: usize) -> usize {
    input_dim.clamp(16, 500)
}

/// Architecture of the random MLP, independent of the input width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Hidden layer widths; `None` selects two layers of [`default_hidden_width`].
    pub hidden: Option<Vec<usize>>,
    pub output_dim: usize,
    pub activation: Activation,
    pub init: InitDistribution,
    /// Apply the activation after the final layer too.
    pub activate_output: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            hidden: None,
            output_dim: DEFAULT_OUTPUT_DIM,
            activation: Activation::Tanh,
            init: InitDistribution::StandardNormal,
            activate_output: false,
        }
    }
}

impl NetworkSpec {
    pub fn hidden_for(&self, input_dim: usize) -> Vec<usize> {
        self.hidden
            .clone()
            .unwrap_or_else(|| vec![default_hidden_width(input_dim); 2])
    }
}

/// One fully connected layer shared by all ensemble members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CereLayer {
    base_weights: Matrix,
    p_vectors: Vec<Vec<f64>>,
    q_vectors: Vec<Vec<f64>>,
    activation: Activation,
    apply_activation: bool,
}

impl CereLayer {
    pub fn new(
        base_weights: Matrix,
        p_vectors: Vec<Vec<f64>>,
        q_vectors: Vec<Vec<f64>>,
        activation: Activation,
        apply_activation: bool,
    ) -> Result<Self> {
        let (m, n) = base_weights.shape();
        if p_vectors.is_empty() || p_vectors.len() != q_vectors.len() {
            return Err(Error::config(format!(
                "need a matching, non-empty set of p/q vectors (got {} and {})",
                p_vectors.len(),
                q_vectors.len()
            )));
        }
        if let Some(p) = p_vectors.iter().find(|p| p.len() != m) {
            return Err(Error::shape(format!("p vector of length {}, expected {m}", p.len())));
        }
        if let Some(q) = q_vectors.iter().find(|q| q.len() != n) {
            return Err(Error::shape(format!("q vector of length {}, expected {n}", q.len())));
        }
        if p_vectors.iter().chain(&q_vectors).flatten().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite perturbation vector entry"));
        }
        Ok(Self {
            base_weights,
            p_vectors,
            q_vectors,
            activation,
            apply_activation,
        })
    }

    pub fn base_weights(&self) -> &Matrix {
        &self.base_weights
    }

    pub fn p(&self, member: usize) -> &[f64] {
        &self.p_vectors[member]
    }

    pub fn q(&self, member: usize) -> &[f64] {
        &self.q_vectors[member]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn applies_activation(&self) -> bool {
        self.apply_activation
    }

    pub fn input_dim(&self) -> usize {
        self.base_weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.base_weights.cols()
    }

    /// The member weight `W0 ∘ (p qᵀ)`, formed explicitly. Reference use only.
    pub fn materialize_weights(&self, member: usize) -> Matrix {
        let (p, q) = (self.p(member), self.q(member));
        Matrix::from_fn(self.input_dim(), self.output_dim(), |i, j| {
            self.base_weights.get(i, j) * (p[i] * q[j])
        })
    }

    fn activate(&self, m: Matrix) -> Matrix {
        if self.apply_activation {
            let (rows, cols) = m.shape();
            let mut data = m.into_vec();
            self.activation.apply_in_place(&mut data);
            Matrix::from_raw(rows, cols, data)
        } else {
            m
        }
    }

    fn forward_member(&self, x: &Matrix, member: usize) -> Result<Matrix> {
        let h = x
            .scale_columns(self.p(member))?
            .matmul(&self.base_weights)?
            .scale_columns(self.q(member))?;
        Ok(self.activate(h))
    }

    /// Stacked pass: `x` holds `r` blocks of `block` rows, block `u` belonging to member `u`.
    fn forward_stacked(&self, x: &Matrix, block: usize) -> Result<Matrix> {
        let (m, n) = self.base_weights.shape();
        let mut scaled = x.as_slice().to_vec();
        for (u, chunk) in scaled.chunks_mut(block * m).enumerate() {
            let p = self.p(u);
            for row in chunk.chunks_exact_mut(m) {
                for (v, s) in row.iter_mut().zip(p) {
                    *v *= s;
                }
            }
        }
        let product = Matrix::from_raw(x.rows(), m, scaled).matmul(&self.base_weights)?;
        let mut out = product.into_vec();
        for (u, chunk) in out.chunks_mut(block * n).enumerate() {
            let q = self.q(u);
            for row in chunk.chunks_exact_mut(n) {
                for (v, s) in row.iter_mut().zip(q) {
                    *v *= s;
                }
            }
        }
        Ok(self.activate(Matrix::from_raw(x.rows(), n, out)))
    }
}

/// Frozen random network defining `r` representation functions at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CereNetwork {
    layers: Vec<CereLayer>,
    ensemble_size: usize,
    input_dim: usize,
    output_dim: usize,
    master_seed: u64,
}

impl CereNetwork {
    /// Assembles a network from explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<CereLayer>, master_seed: u64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::config("network needs at least one layer"))?;
        let ensemble_size = first.p_vectors.len();
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(format!(
                    "layer output width {} does not feed input width {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        if layers.iter().any(|l| l.p_vectors.len() != ensemble_size) {
            return Err(Error::config("layers disagree on ensemble size"));
        }
        Ok(Self {
            input_dim: first.input_dim(),
            output_dim: layers.last().map_or(0, CereLayer::output_dim),
            layers,
            ensemble_size,
            master_seed,
        })
    }

    /// Single linear layer with `W0 = I` and all-ones perturbations: every member is the identity map.
    pub fn identity(dim: usize, ensemble_size: usize) -> Result<Self> {
        if dim == 0 || ensemble_size == 0 {
            return Err(Error::config("identity network needs positive width and ensemble size"));
        }
        let layer = CereLayer::new(
            Matrix::identity(dim),
            vec![vec![1.0; dim]; ensemble_size],
            vec![vec![1.0; dim]; ensemble_size],
            Activation::Tanh,
            false,
        )?;
        Self::from_layers(vec![layer], 0)
    }

    pub fn layers(&self) -> &[CereLayer] {
        &self.layers
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "network expects {} input features, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Maps `x` through member `member` alone, layer by layer.
    pub fn forward_member(&self, x: &Matrix, member: usize) -> Result<Matrix> {
        self.check_input(x)?;
        if member >= self.ensemble_size {
            return Err(Error::Index {
                index: member,
                len: self.ensemble_size,
            });
        }
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward_member(&h, member)?;
        }
        Ok(h)
    }

    /// Maps `x` through all members, processing `batch_size` rows at a time.
    ///
    /// Each mini-batch is replicated once per member and pushed through every
    /// layer with a single matrix product. Batches run in parallel; the output
    /// does not depend on the batch size or the schedule.
    pub fn forward_ensemble(&self, x: &Matrix, batch_size: usize) -> Result<RepresentationSet> {
        self.check_input(x)?;
        if batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        let n = x.rows();
        let r = self.ensemble_size;
        let d = self.output_dim;
        let starts: Vec<usize> = (0..n).step_by(batch_size).collect();
        let blocks = starts
            .par_iter()
            .map(|&start| {
                let end = (start + batch_size).min(n);
                let batch = x.slice_rows(start, end);
                let mut h = Matrix::vstack(&vec![batch; r])?;
                for layer in &self.layers {
                    h = layer.forward_stacked(&h, end - start)?;
                }
                Ok(h)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut members: Vec<Vec<f64>> = (0..r).map(|_| Vec::with_capacity(n * d)).collect();
        for (&start, h) in starts.iter().zip(&blocks) {
            let rows = (start + batch_size).min(n) - start;
            for (u, member) in members.iter_mut().enumerate() {
                member.extend_from_slice(&h.as_slice()[u * rows * d..(u + 1) * rows * d]);
            }
        }
        let members = members
            .into_iter()
            .map(|data| Matrix::new(n, d, data))
            .collect::<Result<Vec<_>>>()
            .map_err(|_| Error::input("representation produced non-finite values"))?;
        Ok(RepresentationSet {
            members,
            source_seed: self.master_seed,
            source_dims: (n, self.input_dim, d, r),
        })
    }
}

/// Samples a network: one hidden stack per `spec`, `ensemble_size` members.
///
/// Base weights of layer `l` come from stream `("cere-base", l)` and member
/// `u`'s vectors from `("cere", l, u)`, so growing the ensemble leaves
/// existing members unchanged.
pub fn build_network(
    input_dim: usize,
    spec: &NetworkSpec,
    ensemble_size: usize,
    rng: &RngStream,
) -> Result<CereNetwork> {
    let hidden = spec.hidden_for(input_dim);
    if input_dim == 0 || spec.output_dim == 0 || hidden.contains(&0) {
        return Err(Error::config("network dimensions must be at least 1"));
    }
    if ensemble_size == 0 {
        return Err(Error::config("ensemble size must be at least 1"));
    }
    let widths: Vec<usize> = std::iter::once(input_dim)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(spec.output_dim))
        .collect();
    let n_layers = widths.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for (l, w) in widths.windows(2).enumerate() {
        let (m, n) = (w[0], w[1]);
        let base = sample_matrix(&mut rng.derive("cere-base", &[l as u64]), m, n, spec.init);
        let (p, q): (Vec<_>, Vec<_>) = (0..ensemble_size)
            .map(|u| {
                let mut s = rng.derive("cere", &[l as u64, u as u64]);
                (s.sample_vec(m, spec.init), s.sample_vec(n, spec.init))
            })
            .unzip();
        let last = l + 1 == n_layers;
        layers.push(CereLayer::new(
            base,
            p,
            q,
            spec.activation,
            !last || spec.activate_output,
        )?);
    }
    CereNetwork::from_layers(layers, rng.seed())
}

/// The `r` projected copies of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    members: Vec<Matrix>,
    source_seed: u64,
    /// `(N, D, d, r)`
    source_dims: (usize, usize, usize, usize),
}

impl RepresentationSet {
    pub fn members(&self) -> &[Matrix] {
        &self.members
    }

    pub fn member(&self, u: usize) -> &Matrix {
        &self.members[u]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn source_seed(&self) -> u64 {
        self.source_seed
    }

    pub fn source_dims(&self) -> (usize, usize, usize, usize) {
        self.source_dims
    }
}

/// Per-column mean and standard deviation from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; exactly 0 marks a constant column.
    pub std: Vec<f64>,
}

impl ColumnStats {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::input("cannot standardize an empty matrix"));
        }
        let n = x.rows() as f64;
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for j in 0..x.cols() {
            let col = x.column(j);
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                mean.push(first);
                std.push(0.0);
                continue;
            }
            let mu = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean.push(mu);
            std.push(var.sqrt());
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes `x` with these statistics; constant columns become zero.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::shape(format!(
                "statistics cover {} columns, data has {}",
                self.dim(),
                x.cols()
            )));
        }
        let out = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            if self.std[j] == 0.0 {
                0.0
            } else {
                (x.get(i, j) - self.mean[j]) / self.std[j]
            }
        });
        Matrix::new(out.rows(), out.cols(), out.into_vec())
    }

    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.dim() {
            return Err(Error::shape("statistics and data disagree on width"));
        }
        Ok(Matrix::from_fn(z.rows(), z.cols(), |i, j| {
            z.get(i, j) * self.std[j] + self.mean[j]
        }))
    }
}

/// Standardizes columns to zero mean and unit variance, returning the statistics used.
pub fn standardize(x: &Matrix) -> Result<(Matrix, ColumnStats)> {
    let stats = ColumnStats::fit(x)?;
    Ok((stats.transform(x)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_data(seed: u64, n: usize, d: usize) -> Matrix {
        sample_matrix(&mut RngStream::from_seed(seed), n, d, InitDistribution::StandardNormal)
    }

    #[test]
    fn build_shapes() {
        let spec = NetworkSpec {
            hidden: Some(vec![8]),
            output_dim: 2,
            ..Default::default()
        };
        let net = build_network(4, &spec, 3, &RngStream::from_seed(1)).unwrap();
        assert_eq!(net.layers().len(), 2);
        assert_eq!(net.layers()[0].base_weights().shape(), (4, 8));
        assert_eq!(net.layers()[1].base_weights().shape(), (8, 2));
        for layer in net.layers() {
            assert_eq!(layer.p_vectors.len(), 3);
            assert_eq!(layer.q_vectors.len(), 3);
        }
        assert!(net.layers()[0].applies_activation());
        assert!(!net.layers()[1].applies_activation());
        let again = build_network(4, &spec, 3, &RngStream::from_seed(1)).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn single_linear_layer() {
        let spec = NetworkSpec {
            hidden: Some(vec![]),
            output_dim: 2,
            ..Default::default()
        };
        let net = build_network(2, &spec, 1, &RngStream::from_seed(1)).unwrap();
        assert_eq!(net.layers().len(), 1);
        assert!(!net.layers()[0].applies_activation());
    }

    #[test]
    fn zero_dims_rejected() {
        let spec = NetworkSpec {
            hidden: Some(vec![0]),
            ..Default::default()
        };
        assert!(matches!(
            build_network(3, &spec, 2, &RngStream::from_seed(1)),
            Err(Error::Config(_))
        ));
        assert!(build_network(3, &NetworkSpec::default(), 0, &RngStream::from_seed(1)).is_err());
        assert!(build_network(0, &NetworkSpec::default(), 1, &RngStream::from_seed(1)).is_err());
    }

    #[test]
    fn adding_members_keeps_earlier_ones() {
        let spec = NetworkSpec::default();
        let small = build_network(5, &spec, 2, &RngStream::from_seed(4)).unwrap();
        let big = build_network(5, &spec, 6, &RngStream::from_seed(4)).unwrap();
        let x = random_data(2, 10, 5);
        for u in 0..2 {
            assert_eq!(small.forward_member(&x, u).unwrap(), big.forward_member(&x, u).unwrap());
        }
    }

    #[test]
    fn identity_network_is_exact() {
        let net = CereNetwork::identity(3, 2).unwrap();
        let x = random_data(8, 20, 3);
        assert_eq!(net.forward_member(&x, 1).unwrap(), x);
        let reps = net.forward_ensemble(&x, 7).unwrap();
        assert_eq!(reps.member(0), &x);
    }

    #[test]
    fn neutral_perturbation_equals_plain_mlp() {
        let w0 = random_data(3, 4, 6);
        let w1 = random_data(4, 6, 2);
        let ones = |k| vec![vec![1.0; k]];
        let net = CereNetwork::from_layers(
            vec![
                CereLayer::new(w0.clone(), ones(4), ones(6), Activation::Tanh, true).unwrap(),
                CereLayer::new(w1.clone(), ones(6), ones(2), Activation::Tanh, false).unwrap(),
            ],
            0,
        )
        .unwrap();
        let x = random_data(5, 9, 4);
        let plain = Activation::Tanh.apply(&x.matmul(&w0).unwrap()).matmul(&w1).unwrap();
        let got = net.forward_member(&x, 0).unwrap();
        for (a, b) in got.as_slice().iter().zip(plain.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn member_index_checked() {
        let net = build_network(3, &NetworkSpec::default(), 2, &RngStream::from_seed(1)).unwrap();
        let x = random_data(1, 4, 3);
        assert!(matches!(net.forward_member(&x, 2), Err(Error::Index { index: 2, len: 2 })));
        assert!(matches!(net.forward_member(&random_data(1, 4, 2), 0), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_size_does_not_change_output() {
        let net = build_network(6, &NetworkSpec::default(), 4, &RngStream::from_seed(9)).unwrap();
        let x = random_data(10, 37, 6);
        let one = net.forward_ensemble(&x, 1).unwrap();
        let all = net.forward_ensemble(&x, 37).unwrap();
        let odd = net.forward_ensemble(&x, 5).unwrap();
        assert_eq!(one, all);
        assert_eq!(one, odd);
    }

    #[test]
    fn members_are_diverse() {
        let net = build_network(4, &NetworkSpec::default(), 5, &RngStream::from_seed(12)).unwrap();
        let reps = net.forward_ensemble(&random_data(1, 30, 4), 64).unwrap();
        for a in 0..5 {
            for b in a + 1..5 {
                assert_ne!(reps.member(a), reps.member(b));
            }
        }
    }

    #[test]
    fn standardize_examples() {
        let x = Matrix::from_rows(&[[3.0, 0.0], [3.0, 2.0]]).unwrap();
        let (z, stats) = standardize(&x).unwrap();
        assert_eq!(z.column(0), vec![0.0, 0.0]);
        assert_eq!(z.column(1), vec![-1.0, 1.0]);
        assert_eq!(stats.std, vec![0.0, 1.0]);
        assert!(standardize(&Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn constant_column_with_rounding_mean() {
        let x = Matrix::from_rows(&[[0.1], [0.1], [0.1]]).unwrap();
        let (z, _) = standardize(&x).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn standardize_round_trip() {
        let x = random_data(21, 50, 7).map(|v| v * 3.0 + 10.0);
        let (z, stats) = standardize(&x).unwrap();
        let back = stats.inverse_transform(&z).unwrap();
        for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
