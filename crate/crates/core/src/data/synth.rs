use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use super::DataMatrix;
use crate::error::{Error, Result};
use crate::math::{sample_matrix, InitDistribution, Matrix, RngStream};

/// Ring scenario: normals on a noisy circle, anomalies clustered at its centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingParams {
    pub n_normal: usize,
    pub n_anomaly: usize,
    pub radius: f64,
    /// Standard deviation of the radial noise; truncated at 3 units.
    pub thickness: f64,
    /// Radius of the central disk holding the anomalies.
    pub anomaly_radius: f64,
}

impl Default for RingParams {
    fn default() -> Self {
        Self {
            n_normal: 800,
            n_anomaly: 30,
            radius: 1.0,
            thickness: 0.05,
            anomaly_radius: 0.2,
        }
    }
}

/// Normals first, then anomalies; labels 0/1 accordingly.
pub fn gen_ring(params: &RingParams, seed: u64) -> Result<DataMatrix> {
    let RingParams {
        n_normal,
        n_anomaly,
        radius,
        thickness,
        anomaly_radius,
    } = *params;
    if n_normal == 0 || n_anomaly == 0 {
        return Err(Error::config("ring needs at least one normal and one anomaly"));
    }
    let inner = radius - 3.0 * thickness;
    if !(thickness >= 0.0 && anomaly_radius > 0.0 && anomaly_radius < inner) {
        return Err(Error::config(format!(
            "anomaly radius must lie in (0, {inner}) and thickness be non-negative"
        )));
    }
    let root = RngStream::from_seed(seed);
    let mut rng = root.derive("ring-normal", &[]);
    let mut rows = Vec::with_capacity(n_normal + n_anomaly);
    for _ in 0..n_normal {
        let angle = rng.unit() * TAU;
        let noise = loop {
            let z = rng.standard_normal();
            if z.abs() <= 3.0 {
                break z;
            }
        };
        let rho = radius + thickness * noise;
        rows.push([rho * angle.cos(), rho * angle.sin()]);
    }
    let mut rng = root.derive("ring-anomaly", &[]);
    for _ in 0..n_anomaly {
        let angle = rng.unit() * TAU;
        // uniform over the disk
        let rho = anomaly_radius * rng.unit().sqrt();
        rows.push([rho * angle.cos(), rho * angle.sin()]);
    }
    let labels = std::iter::repeat_n(0, n_normal).chain(std::iter::repeat_n(1, n_anomaly)).collect();
    DataMatrix::new(Matrix::from_rows(&rows)?, Some(labels), format!("ring(seed={seed})"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlobKind {
    SingleBlob,
    TwoBlob,
    Sinusoid,
}

impl BlobKind {
    pub const ALL: [BlobKind; 3] = [BlobKind::SingleBlob, BlobKind::TwoBlob, BlobKind::Sinusoid];

    /// Default noise level for the kind.
    pub fn default_noise(self) -> f64 {
        match self {
            BlobKind::SingleBlob | BlobKind::TwoBlob => 1.0,
            BlobKind::Sinusoid => 0.15,
        }
    }
}

impl fmt::Display for BlobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlobKind::SingleBlob => "single-blob",
            BlobKind::TwoBlob => "two-blob",
            BlobKind::Sinusoid => "sinusoid",
        })
    }
}

impl FromStr for BlobKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "single-blob" => Ok(BlobKind::SingleBlob),
            "two-blob" => Ok(BlobKind::TwoBlob),
            "sinusoid" => Ok(BlobKind::Sinusoid),
            other => Err(Error::config(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// Two-blob centres sit at `±(TWO_BLOB_OFFSET, TWO_BLOB_OFFSET)`.
pub const TWO_BLOB_OFFSET: f64 = 4.0;

/// Unlabelled 2-D clouds. Single blob: isotropic Gaussian at the origin with
/// standard deviation `noise`. Two blobs: two such Gaussians at
/// `±(4, 4)`. Sinusoid: `x ~ U(0, 2π)`, `y = sin x + noise · N(0, 1)`.
pub fn gen_blobs(kind: BlobKind, n: usize, noise: f64, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::config("need at least one point"));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::config("noise must be finite and non-negative"));
    }
    let mut rng = RngStream::from_seed(seed).derive(&kind.to_string(), &[]);
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|i| match kind {
            BlobKind::SingleBlob => [noise * rng.standard_normal(), noise * rng.standard_normal()],
            BlobKind::TwoBlob => {
                let c = if i % 2 == 0 { -TWO_BLOB_OFFSET } else { TWO_BLOB_OFFSET };
                [c + noise * rng.standard_normal(), c + noise * rng.standard_normal()]
            }
            BlobKind::Sinusoid => {
                let x = rng.unit() * TAU;
                [x, x.sin() + noise * rng.standard_normal()]
            }
        })
        .collect();
    DataMatrix::new(Matrix::from_rows(&rows)?, None, format!("{kind}(seed={seed})"))
}

/// [`gen_blobs`] plus `n_anomaly` labelled anomalies placed where each shape
/// has no mass: a shell between 3.5 and 5 standard deviations for the single
/// blob, a Gaussian of the blobs' own spread at the midpoint between the
/// centres for two blobs, and points well off
/// the curve for the sinusoid.
pub fn gen_blobs_with_anomalies(
    kind: BlobKind,
    n_normal: usize,
    n_anomaly: usize,
    noise: f64,
    seed: u64,
) -> Result<DataMatrix> {
    let normals = gen_blobs(kind, n_normal, noise, seed)?;
    let mut rng = RngStream::from_seed(seed).derive("blob-anomaly", &[]);
    let scale = noise.max(1e-3);
    let anomalies: Vec<[f64; 2]> = (0..n_anomaly)
        .map(|_| match kind {
            BlobKind::SingleBlob => {
                let angle = rng.unit() * TAU;
                let rho = scale * (3.5 + 1.5 * rng.unit());
                [rho * angle.cos(), rho * angle.sin()]
            }
            BlobKind::TwoBlob => [scale * rng.standard_normal(), scale * rng.standard_normal()],
            BlobKind::Sinusoid => {
                let x = rng.unit() * TAU;
                let side = if rng.unit() < 0.5 { -1.0 } else { 1.0 };
                [x, x.sin() + side * (6.0 * scale + rng.unit() * 2.0 * scale)]
            }
        })
        .collect();
    let mut data = normals.values().as_slice().to_vec();
    data.extend(anomalies.iter().flatten());
    let labels = std::iter::repeat_n(0, n_normal).chain(std::iter::repeat_n(1, n_anomaly)).collect();
    DataMatrix::new(
        Matrix::new(n_normal + n_anomaly, 2, data)?,
        Some(labels),
        format!("{kind}+anomalies(seed={seed})"),
    )
}

/// Sizes swept at `D = 32`: 1,000 doubling to 256,000.
pub const DEFAULT_SCALING_SIZES: [usize; 9] = [1000, 2000, 4000, 8000, 16000, 32000, 64000, 128000, 256000];
/// Dimensionalities swept at `N = 5,000`: 16 doubling to 4,096.
pub const DEFAULT_SCALING_DIMS: [usize; 9] = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096];
const SCALING_BASE_N: usize = 5000;
const SCALING_BASE_D: usize = 32;

/// Grid of Gaussian datasets. Datasets are generated on demand because the
/// full default grid does not fit comfortably in memory at once.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSuite {
    shapes: Vec<(usize, usize)>,
    seed: u64,
}

impl ScalingSuite {
    /// `(N, D)` for every dataset: the dimension sweep first, then the size sweep.
    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn dataset(&self, i: usize) -> DataMatrix {
        let (n, d) = self.shapes[i];
        let mut rng = RngStream::from_seed(self.seed).derive("scaling", &[i as u64]);
        let values = sample_matrix(&mut rng, n, d, InitDistribution::StandardNormal);
        DataMatrix::new(values, None, format!("gaussian({n}x{d}, seed={})", self.seed))
            .expect("unlabelled data is always valid")
    }

    pub fn iter(&self) -> impl Iterator<Item = DataMatrix> + '_ {
        (0..self.len()).map(|i| self.dataset(i))
    }
}

/// Dimension sweep at `N = 5000` followed by size sweep at `D = 32`.
pub fn gen_scaling_suite(sizes: &[usize], dims: &[usize], seed: u64) -> ScalingSuite {
    let shapes = dims
        .iter()
        .map(|&d| (SCALING_BASE_N, d))
        .chain(sizes.iter().map(|&n| (n, SCALING_BASE_D)))
        .collect();
    ScalingSuite { shapes, seed }
}

/// Removes or injects anomalies so that the anomaly share becomes `rho`.
///
/// The target count is `round(rho / (1 - rho) * normals)`. Surplus anomalies
/// are dropped at random; missing ones are copies of random existing anomalies
/// with Gaussian jitter of 1% of each column's standard deviation, appended at
/// the end. Normal rows are never touched.
pub fn adjust_contamination(data: &DataMatrix, rho: f64, seed: u64) -> Result<DataMatrix> {
    if !(0.0..=0.10).contains(&rho) {
        return Err(Error::config(format!("contamination ratio {rho} outside [0, 0.10]")));
    }
    let labels = data.require_labels()?;
    let anomalies: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let n_normal = labels.len() - anomalies.len();
    let target = (rho / (1.0 - rho) * n_normal as f64).round() as usize;
    let source = format!("{}|rho={rho}", data.source());
    let mut rng = RngStream::from_seed(seed).derive("contamination", &[]);

    if target == anomalies.len() {
        let mut out = data.clone();
        out.set_source(source);
        return Ok(out);
    }
    let x = data.values();
    if target < anomalies.len() {
        let mut keep_anom = rng.sample_indices(anomalies.len(), target);
        keep_anom.sort_unstable();
        let kept: Vec<usize> = keep_anom.iter().map(|&k| anomalies[k]).collect();
        let rows: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] == 0 || kept.binary_search(&i).is_ok())
            .collect();
        let new_labels = rows.iter().map(|&i| labels[i]).collect();
        return DataMatrix::new(x.select_rows(&rows), Some(new_labels), source);
    }
    if anomalies.is_empty() {
        return Err(Error::input("cannot inject anomalies into a dataset that has none"));
    }
    let spread: Vec<f64> = (0..x.cols())
        .map(|j| {
            let col = x.column(j);
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / col.len() as f64).sqrt()
        })
        .collect();
    let mut values = x.as_slice().to_vec();
    let mut new_labels = labels.to_vec();
    for _ in anomalies.len()..target {
        let src = anomalies[rng.index(anomalies.len())];
        for (j, &v) in x.row(src).iter().enumerate() {
            values.push(v + 0.01 * spread[j] * rng.standard_normal());
        }
        new_labels.push(1);
    }
    DataMatrix::new(Matrix::new(new_labels.len(), x.cols(), values)?, Some(new_labels), source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_contracts() {
        let p = RingParams::default();
        for seed in 0..5 {
            let d = gen_ring(&p, seed).unwrap();
            let labels = d.labels().unwrap();
            let x = d.values();
            let (lo, hi) = (p.radius - 3.0 * p.thickness, p.radius + 3.0 * p.thickness);
            for (i, row) in x.iter_rows().enumerate() {
                let r = row[0].hypot(row[1]);
                if labels[i] == 0 {
                    assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
                } else {
                    assert!(r < lo);
                }
            }
            // any axis-parallel cut with anomalies on a side also has normals there
            for axis in 0..2 {
                let (mut nmin, mut nmax) = (f64::INFINITY, f64::NEG_INFINITY);
                let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
                for (i, row) in x.iter_rows().enumerate() {
                    let v = row[axis];
                    if labels[i] == 0 {
                        nmin = nmin.min(v);
                        nmax = nmax.max(v);
                    } else {
                        amin = amin.min(v);
                        amax = amax.max(v);
                    }
                }
                let mut cuts: Vec<f64> = x.column(axis);
                cuts.sort_by(f64::total_cmp);
                for t in cuts {
                    let left_anom = amin <= t;
                    let right_anom = amax > t;
                    assert!(!left_anom || nmin <= t);
                    assert!(!right_anom || nmax > t);
                }
            }
        }
    }

    #[test]
    fn ring_rejects_bad_params() {
        let p = RingParams {
            anomaly_radius: 0.9,
            ..Default::default()
        };
        assert!(gen_ring(&p, 0).is_err());
        let p = RingParams {
            n_anomaly: 0,
            ..Default::default()
        };
        assert!(gen_ring(&p, 0).is_err());
    }

    #[test]
    fn single_blob_mean() {
        let n = 2000;
        let d = gen_blobs(BlobKind::SingleBlob, n, 1.0, 3).unwrap();
        for j in 0..2 {
            let mean = d.values().column(j).iter().sum::<f64>() / n as f64;
            assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn two_blob_clusters() {
        let d = gen_blobs(BlobKind::TwoBlob, 1000, 1.0, 4).unwrap();
        let x = d.values();
        // Lloyd's k-means with k = 2 from the two extreme points
        let pts: Vec<[f64; 2]> = x.iter_rows().map(|r| [r[0], r[1]]).collect();
        let by_sum = |p: &&[f64; 2]| p[0] + p[1];
        let mut c = [
            *pts.iter().min_by(|a, b| by_sum(a).total_cmp(&by_sum(b))).unwrap(),
            *pts.iter().max_by(|a, b| by_sum(a).total_cmp(&by_sum(b))).unwrap(),
        ];
        let dist2 = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        let mut assign = vec![0; pts.len()];
        for _ in 0..20 {
            for (k, p) in pts.iter().enumerate() {
                assign[k] = usize::from(dist2(p, &c[1]) < dist2(p, &c[0]));
            }
            for (ci, center) in c.iter_mut().enumerate() {
                let members: Vec<_> = pts.iter().zip(&assign).filter(|(_, &a)| a == ci).map(|(p, _)| p).collect();
                let m = members.len() as f64;
                *center = [
                    members.iter().map(|p| p[0]).sum::<f64>() / m,
                    members.iter().map(|p| p[1]).sum::<f64>() / m,
                ];
            }
        }
        let spread = pts
            .iter()
            .zip(&assign)
            .map(|(p, &a)| dist2(p, &c[a]))
            .sum::<f64>()
            / (2.0 * pts.len() as f64);
        let inter = dist2(&c[0], &c[1]).sqrt();
        assert!(inter > 5.0 * spread.sqrt(), "inter {inter} intra {}", spread.sqrt());
    }

    #[test]
    fn sinusoid_residual() {
        let noise = 0.2;
        let d = gen_blobs(BlobKind::Sinusoid, 5000, noise, 5).unwrap();
        let res: Vec<f64> = d.values().iter_rows().map(|r| r[1] - r[0].sin()).collect();
        let mu = res.iter().sum::<f64>() / res.len() as f64;
        let sd = (res.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / res.len() as f64).sqrt();
        assert!((sd - noise).abs() < 0.2 * noise);
    }

    #[test]
    fn blob_kind_parse() {
        assert_eq!("two-blob".parse::<BlobKind>().unwrap(), BlobKind::TwoBlob);
        assert!(matches!("three-blob".parse::<BlobKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn scaling_suite_shapes() {
        let suite = gen_scaling_suite(&DEFAULT_SCALING_SIZES, &DEFAULT_SCALING_DIMS, 1);
        assert_eq!(suite.len(), 18);
        assert_eq!(suite.shapes()[0], (5000, 16));
        assert_eq!(suite.shapes()[8], (5000, 4096));
        assert_eq!(suite.shapes()[9], (1000, 32));
        assert_eq!(suite.shapes()[17], (256000, 32));
        let small = gen_scaling_suite(&[100, 200], &[3], 9);
        for (i, d) in small.iter().enumerate() {
            assert_eq!(d.values().shape(), small.shapes()[i]);
        }
        assert_eq!(small.dataset(0), gen_scaling_suite(&[100, 200], &[3], 9).dataset(0));
    }

    fn two_percent() -> DataMatrix {
        let normals = sample_matrix(&mut RngStream::from_seed(1), 490, 3, InitDistribution::StandardNormal);
        let anomalies = sample_matrix(&mut RngStream::from_seed(2), 10, 3, InitDistribution::StandardNormal)
            .map(|v| v + 8.0);
        let x = Matrix::vstack(&[normals, anomalies]).unwrap();
        let labels = (0..500).map(|i| u8::from(i >= 490)).collect();
        DataMatrix::new(x, Some(labels), "two-percent").unwrap()
    }

    fn normal_rows(d: &DataMatrix) -> Vec<Vec<f64>> {
        let l = d.labels().unwrap();
        d.values().iter_rows().enumerate().filter(|(i, _)| l[*i] == 0).map(|(_, r)| r.to_vec()).collect()
    }

    #[test]
    fn contamination_zero_and_identity() {
        let d = two_percent();
        let none = adjust_contamination(&d, 0.0, 3).unwrap();
        assert_eq!(none.n_anomalies(), 0);
        assert_eq!(normal_rows(&none), normal_rows(&d));
        let same = adjust_contamination(&d, 0.02, 3).unwrap();
        assert_eq!(same.values(), d.values());
        assert_eq!(same.labels(), d.labels());
        assert_ne!(same.source(), d.source());
    }

    #[test]
    fn contamination_injection_count() {
        let d = two_percent();
        let up = adjust_contamination(&d, 0.10, 3).unwrap();
        let expected = (0.10f64 / 0.90 * 490.0).round() as i64;
        assert!((up.n_anomalies() as i64 - expected).abs() <= 1);
        let ratio = up.n_anomalies() as f64 / up.n_rows() as f64;
        assert!((ratio - 0.10).abs() <= 1.0 / up.n_rows() as f64);
        assert_eq!(normal_rows(&up), normal_rows(&d));
        let down = adjust_contamination(&d, 0.01, 3).unwrap();
        assert_eq!(down.n_anomalies(), 5);
        assert_eq!(normal_rows(&down), normal_rows(&d));
        assert!(matches!(adjust_contamination(&d, 0.2, 3), Err(Error::Config(_))));
    }
}
