use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::Error;

/// Deterministic random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose output is specified bit-for-bit, so sequences are
/// identical across runs and platforms. Child streams are derived from a tag
/// and index path rather than by drawing from the parent, so a component's
/// randomness does not depend on how many siblings were built before it.
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream for the component named `tag` at position `path`.
    ///
    /// Depends only on this stream's identity, never on how much of it has
    /// been consumed.
    pub fn derive(&self, tag: &str, path: &[u64]) -> RngStream {
        let mut h = splitmix64(self.stream_id ^ 0x6a09_e667_f3bc_c909);
        h = splitmix64(h ^ fnv1a(tag.as_bytes()));
        for &p in path {
            h = splitmix64(h ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        }
        RngStream::new(self.seed, h)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `k` distinct indices drawn uniformly from `0..n`.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k.min(n)).into_vec()
    }

    /// Uniform on the open interval `(lo, hi)`; `None` when no `f64` lies strictly between.
    pub fn open_uniform(&mut self, lo: f64, hi: f64) -> Option<f64> {
        for _ in 0..64 {
            let v = lo + self.unit() * (hi - lo);
            if v > lo && v < hi {
                return Some(v);
            }
        }
        None
    }

    pub fn sample(&mut self, dist: InitDistribution) -> f64 {
        match dist {
            InitDistribution::StandardNormal => self.standard_normal(),
            InitDistribution::Uniform(a) => self.inner.random_range(-a..=a),
        }
    }

    pub fn sample_vec(&mut self, len: usize, dist: InitDistribution) -> Vec<f64> {
        (0..len).map(|_| self.sample(dist)).collect()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("stream_id", &self.stream_id)
            .finish_non_exhaustive()
    }
}

/// Distribution used to initialise network parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum InitDistribution {
    #[default]
    StandardNormal,
    /// Uniform on `[-a, a]`.
    Uniform(f64),
}

impl fmt::Display for InitDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitDistribution::StandardNormal => write!(f, "normal"),
            InitDistribution::Uniform(a) => write!(f, "uniform:{a}"),
        }
    }
}

impl FromStr for InitDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "normal" || s == "standard-normal" {
            return Ok(InitDistribution::StandardNormal);
        }
        if s == "uniform" {
            return Ok(InitDistribution::Uniform(1.0));
        }
        s.strip_prefix("uniform:")
            .and_then(|a| a.parse::<f64>().ok())
            .filter(|a| a.is_finite() && *a > 0.0)
            .map(InitDistribution::Uniform)
            .ok_or_else(|| Error::config(format!("unknown distribution `{s}`")))
    }
}

/// `rows x cols` matrix of i.i.d. draws from `dist`, filled row-major.
pub fn sample_matrix(rng: &mut RngStream, rows: usize, cols: usize, dist: InitDistribution) -> Matrix {
    Matrix::from_raw(rows, cols, rng.sample_vec(rows * cols, dist))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
