use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::math::{Activation, InitDistribution};
use crate::representation::{NetworkSpec, DEFAULT_BATCH_SIZE, DEFAULT_OUTPUT_DIM};
use crate::scoring::ScoreMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Dif,
    IForest,
    Eif,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dif, Algorithm::IForest, Algorithm::Eif];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Dif => "dif",
            Algorithm::IForest => "iforest",
            Algorithm::Eif => "eif",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dif" => Ok(Algorithm::Dif),
            "iforest" => Ok(Algorithm::IForest),
            "eif" => Ok(Algorithm::Eif),
            other => Err(Error::config(format!("unknown algorithm `{other}` (dif, iforest, eif)"))),
        }
    }
}

/// Everything that determines a fitted model.
///
/// Text form is one `key = value` per line; `#` starts a comment. Keys:
/// `algo r t n depth hidden out_dim activation init batch seed mode trees`.
/// `depth` and `hidden` accept `auto`; `hidden` takes a comma list or `none`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub r: usize,
    pub t: usize,
    pub n: usize,
    pub depth: Option<u32>,
    pub hidden: Option<Vec<usize>>,
    pub out_dim: usize,
    pub activation: Activation,
    pub init: InitDistribution,
    pub batch: usize,
    pub seed: u64,
    pub mode: ScoreMode,
    /// Tree count of the baselines.
    pub trees: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dif,
            r: 50,
            t: 6,
            n: 256,
            depth: None,
            hidden: None,
            out_dim: DEFAULT_OUTPUT_DIM,
            activation: Activation::Tanh,
            init: InitDistribution::StandardNormal,
            batch: DEFAULT_BATCH_SIZE,
            seed: 0,
            mode: ScoreMode::Deas,
            trees: 300,
        }
    }
}

const KEYS: [&str; 13] = [
    "activation", "algo", "batch", "depth", "hidden", "init", "mode", "n", "out_dim", "r", "seed", "t", "trees",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("`{key}` expects a non-negative integer, got `{value}`")))
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "algo" | "algorithm" => self.algorithm = value.parse()?,
            "r" => self.r = parse_num(key, value)?,
            "t" => self.t = parse_num(key, value)?,
            "n" => self.n = parse_num(key, value)?,
            "depth" => self.depth = if value == "auto" { None } else { Some(parse_num(key, value)?) },
            "hidden" => {
                self.hidden = match value {
                    "auto" => None,
                    "none" | "" => Some(Vec::new()),
                    list => Some(
                        list.split(',')
                            .map(|w| parse_num(key, w.trim()))
                            .collect::<Result<_>>()?,
                    ),
                }
            }
            "out_dim" | "out-dim" => self.out_dim = parse_num(key, value)?,
            "activation" => self.activation = value.parse()?,
            "init" => self.init = value.parse()?,
            "batch" => self.batch = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "trees" => self.trees = parse_num(key, value)?,
            other => return Err(Error::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    fn entries(&self) -> BTreeMap<&'static str, String> {
        let hidden = match &self.hidden {
            None => "auto".to_string(),
            Some(h) if h.is_empty() => "none".to_string(),
            Some(h) => h.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        };
        let values = [
            self.activation.to_string(),
            self.algorithm.to_string(),
            self.batch.to_string(),
            self.depth.map_or("auto".into(), |d| d.to_string()),
            hidden,
            self.init.to_string(),
            self.mode.to_string(),
            self.n.to_string(),
            self.out_dim.to_string(),
            self.r.to_string(),
            self.seed.to_string(),
            self.t.to_string(),
            self.trees.to_string(),
        ];
        KEYS.into_iter().zip(values).collect()
    }

    /// Sorted `key=value` lines; parsing them back gives an equal config.
    pub fn canonical(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.canonical().as_bytes())[..8])
    }

    pub fn network(&self) -> NetworkSpec {
        NetworkSpec {
            hidden: self.hidden.clone(),
            output_dim: self.out_dim,
            activation: self.activation,
            init: self.init,
            activate_output: false,
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            representations: self.r,
            trees_per_representation: self.t,
            subsample_size: self.n,
            depth_limit: self.depth,
            network: self.network(),
            batch_size: self.batch,
            seed: self.seed,
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            n_trees: self.trees,
            subsample_size: self.n,
            depth_limit: self.depth,
            leaf_adjustment: true,
            seed: self.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_algorithm(&self, algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..self.clone()
        }
    }
}
