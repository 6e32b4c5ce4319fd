use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::Error;

/// Elementwise non-linearity applied between network layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    /// Slope applied to negative inputs.
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(alpha) => {
                if x < 0.0 {
                    alpha * x
                } else {
                    x
                }
            }
        }
    }

    pub fn apply(self, x: &Matrix) -> Matrix {
        x.map(|v| self.apply_scalar(v))
    }

    pub(crate) fn apply_in_place(self, data: &mut [f64]) {
        for v in data {
            *v = self.apply_scalar(*v);
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => write!(f, "tanh"),
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(a) => write!(f, "leaky-relu:{a}"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "leaky-relu" => Ok(Activation::LeakyRelu(0.01)),
            _ => {
                let alpha = s
                    .strip_prefix("leaky-relu:")
                    .and_then(|a| a.parse::<f64>().ok())
                    .filter(|a| a.is_finite() && *a >= 0.0)
                    .ok_or_else(|| Error::config(format!("unknown activation `{s}`")))?;
                Ok(Activation::LeakyRelu(alpha))
            }
        }
    }
}
