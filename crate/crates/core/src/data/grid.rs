use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::scoring::Detector;

/// Axis-aligned box `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    /// Bounding box of the rows of a 2-column matrix, widened by `margin` of its extent.
    pub fn around(x: &Matrix, margin: f64) -> Result<Self> {
        if x.cols() != 2 || x.rows() == 0 {
            return Err(Error::config("bounds need non-empty 2-D data"));
        }
        let ext = |j: usize| {
            let col = x.column(j);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = (hi - lo).max(1e-9) * margin;
            (lo - pad, hi + pad)
        };
        let ((x_min, x_max), (y_min, y_max)) = (ext(0), ext(1));
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMap {
    pub resolution: usize,
    /// `(x, y, score)`, x varying fastest.
    pub points: Vec<(f64, f64, f64)>,
    /// 99th percentile of the training scores.
    pub threshold: f64,
}

impl ScoreMap {
    pub fn lattice(&self) -> Matrix {
        Matrix::from_fn(self.points.len(), 2, |i, j| if j == 0 { self.points[i].0 } else { self.points[i].1 })
    }

    /// Cell with the lowest score.
    pub fn argmin(&self) -> (f64, f64, f64) {
        *self
            .points
            .iter()
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .expect("a map has at least four cells")
    }

    /// `x,y,score` rows after the given comment line.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: &str) -> Result<()> {
        writeln!(out, "{comment}")?;
        writeln!(out, "x,y,score")?;
        for (x, y, s) in &self.points {
            writeln!(out, "{x:?},{y:?},{s:?}")?;
        }
        Ok(())
    }
}

/// Evaluates `model` on a `resolution x resolution` lattice over `bounds`.
pub fn score_map_grid(model: &dyn Detector, training: &Matrix, bounds: Bounds, resolution: usize) -> Result<ScoreMap> {
    if model.input_dim() != 2 {
        return Err(Error::config(format!(
            "score maps need a 2-D model, this one takes {} features",
            model.input_dim()
        )));
    }
    if resolution < 2 {
        return Err(Error::config("resolution must be at least 2"));
    }
    let step = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (resolution - 1) as f64;
    let lattice = Matrix::from_fn(resolution * resolution, 2, |i, j| {
        let (ix, iy) = (i % resolution, i / resolution);
        if j == 0 {
            step(bounds.x_min, bounds.x_max, ix)
        } else {
            step(bounds.y_min, bounds.y_max, iy)
        }
    });
    let scores = model.score(&lattice)?;
    let threshold = percentile(&model.score(training)?, 99.0);
    let points = lattice.iter_rows().zip(scores).map(|(p, s)| (p[0], p[1], s)).collect();
    Ok(ScoreMap {
        resolution,
        points,
        threshold,
    })
}

/// Linear-interpolated percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
