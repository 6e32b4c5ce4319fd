//! Versioned binary container for fitted models.
//!
//! ```text
//! magic    8 bytes  "DIFMODEL"
//! version  u32
//! count    u32      number of sections
//! table    count x (tag: 4 bytes, offset: u64, length: u64)
//! payloads
//! ```
//!
//! All integers and floats are little-endian. Sections: `CONF` (canonical
//! config text), `STAT` (training column statistics), and one model body:
//! `NETW` + `TREE` for a deep forest, `ITRE` for a classic forest, `ETRE` for
//! an extended forest. Readers skip sections they do not know.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::config::{Algorithm, RunConfig};
use crate::baselines::{EifNode, EifTree, ExtendedIsolationForest, INode, ITree, IsolationForest};
use crate::error::{Error, Result};
use crate::forest::{DeepForest, IsolationTree, Split, TreeNode, MAX_DEPTH_LIMIT};
use crate::math::Matrix;
use crate::representation::{CereLayer, CereNetwork, ColumnStats};
use crate::scoring::{Detector, ScoreMode, ScoredForest};

pub const MAGIC: &[u8; 8] = b"DIFMODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Dif(DeepForest),
    IForest(IsolationForest),
    Eif(ExtendedIsolationForest),
}

impl Model {
    pub fn tree_count(&self) -> usize {
        match self {
            Model::Dif(f) => f.trees().len(),
            Model::IForest(f) => f.trees().len(),
            Model::Eif(f) => f.trees().len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.detector(ScoreMode::Deas).input_dim()
    }

    /// Scoring view; `mode` only matters for deep forests.
    pub fn detector(&self, mode: ScoreMode) -> Box<dyn Detector + '_> {
        match self {
            Model::Dif(forest) => Box::new(ScoredForest { forest, mode }),
            Model::IForest(f) => Box::new(f),
            Model::Eif(f) => Box::new(f),
        }
    }

    fn stats(&self) -> &ColumnStats {
        match self {
            Model::Dif(f) => f.training_stats(),
            Model::IForest(f) => f.stats(),
            Model::Eif(f) => f.stats(),
        }
    }
}

/// A fitted model with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: RunConfig,
    pub model: Model,
}

impl ModelFile {
    pub fn encode(&self) -> Vec<u8> {
        let mut sections: Vec<([u8; 4], Vec<u8>)> = vec![
            (*b"CONF", self.config.canonical().into_bytes()),
            (*b"STAT", encode_stats(self.model.stats())),
        ];
        match &self.model {
            Model::Dif(f) => {
                sections.push((*b"NETW", encode_network(f.network())));
                sections.push((*b"TREE", encode_deep_trees(f.trees())));
            }
            Model::IForest(f) => sections.push((*b"ITRE", encode_itrees(f.trees()))),
            Model::Eif(f) => sections.push((*b"ETRE", encode_etrees(f.trees()))),
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LE>(FORMAT_VERSION).unwrap();
        out.write_u32::<LE>(sections.len() as u32).unwrap();
        let mut offset = (out.len() + sections.len() * 20) as u64;
        for (tag, body) in &sections {
            out.extend_from_slice(tag);
            out.write_u64::<LE>(offset).unwrap();
            out.write_u64::<LE>(body.len() as u64).unwrap();
            offset += body.len() as u64;
        }
        for (_, body) in sections {
            out.extend_from_slice(&body);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Model("not a model file (bad magic)".into()));
        }
        let mut head = Dec::new(&bytes[8..], "header");
        let version = head.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported format version {version}")));
        }
        let count = head.u32()? as usize;
        let mut table = Vec::new();
        for _ in 0..count {
            let mut tag = [0u8; 4];
            head.bytes(&mut tag)?;
            let (offset, len) = (head.u64()? as usize, head.u64()? as usize);
            let end = offset
                .checked_add(len)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Model(format!("section {} out of bounds", String::from_utf8_lossy(&tag))))?;
            table.push((tag, &bytes[offset..end]));
        }
        let section = |tag: &[u8; 4]| {
            table
                .iter()
                .find(|(t, _)| t == tag)
                .map(|(_, b)| *b)
                .ok_or_else(|| Error::Model(format!("missing section {}", String::from_utf8_lossy(tag))))
        };
        let conf = std::str::from_utf8(section(b"CONF")?).map_err(|_| Error::Model("config is not UTF-8".into()))?;
        let config = RunConfig::parse(conf).map_err(|e| Error::Model(format!("stored config: {e}")))?;
        let stats = decode_stats(section(b"STAT")?)?;
        let model = match config.algorithm {
            Algorithm::Dif => {
                let network = decode_network(section(b"NETW")?)?;
                let trees = decode_deep_trees(section(b"TREE")?)?;
                Model::Dif(DeepForest::from_parts(network, trees, config.forest_config(), stats)?)
            }
            Algorithm::IForest => Model::IForest(IsolationForest::from_parts(
                decode_itrees(section(b"ITRE")?)?,
                stats,
                config.baseline_config(),
            )?),
            Algorithm::Eif => Model::Eif(ExtendedIsolationForest::from_parts(
                decode_etrees(section(b"ETRE")?)?,
                stats,
                config.baseline_config(),
            )?),
        };
        Ok(Self { config, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Enc(Vec<u8>);

impl Enc {
    fn new() -> Self {
        Enc(Vec::new())
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.write_u32::<LE>(u32::try_from(v).expect("count fits in u32")).unwrap();
    }
    fn u64(&mut self, v: u64) {
        self.0.write_u64::<LE>(v).unwrap();
    }
    fn f64(&mut self, v: f64) {
        self.0.write_f64::<LE>(v).unwrap();
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn indices(&mut self, v: &[usize]) {
        self.u32(v.len());
        v.iter().for_each(|&x| self.u64(x as u64));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Dec<'a> {
    cur: Cursor<&'a [u8]>,
    section: &'static str,
}

impl<'a> Dec<'a> {
    fn new(bytes: &'a [u8], section: &'static str) -> Self {
        Self {
            cur: Cursor::new(bytes),
            section,
        }
    }

    fn err(&self) -> Error {
        Error::Model(format!("section {} is truncated or corrupt", self.section))
    }

    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.cur.read_exact(buf).map_err(|_| self.err())
    }
    fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(|_| self.err())
    }
    fn u32(&mut self) -> Result<u32> {
        self.cur.read_u32::<LE>().map_err(|_| self.err())
    }
    fn u64(&mut self) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(|_| self.err())
    }
    fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(|_| self.err())
    }
    /// Length prefix, refused when it cannot fit in what is left.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(unit) > self.remaining() {
            return Err(self.err());
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn indices(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| Ok(self.u64()? as usize)).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        let mut buf = vec![0; n];
        self.bytes(&mut buf)?;
        String::from_utf8(buf).map_err(|_| self.err())
    }
    fn finish(&self) -> Result<()> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(Error::Model(format!("trailing bytes in section {}", self.section)))
        }
    }
}

fn encode_stats(stats: &ColumnStats) -> Vec<u8> {
    let mut e = Enc::new();
    e.f64s(&stats.mean);
    e.f64s(&stats.std);
    e.0
}

fn decode_stats(bytes: &[u8]) -> Result<ColumnStats> {
    let mut d = Dec::new(bytes, "STAT");
    let (mean, std) = (d.f64s()?, d.f64s()?);
    d.finish()?;
    if mean.len() != std.len() || mean.is_empty() {
        return Err(Error::Model("statistics vectors disagree".into()));
    }
    Ok(ColumnStats { mean, std })
}

fn encode_network(net: &CereNetwork) -> Vec<u8> {
    let mut e = Enc::new();
    e.u64(net.master_seed());
    e.u32(net.ensemble_size());
    e.u32(net.layers().len());
    for layer in net.layers() {
        e.str(&layer.activation().to_string());
        e.u8(u8::from(layer.applies_activation()));
        let w = layer.base_weights();
        e.u32(w.rows());
        e.u32(w.cols());
        w.as_slice().iter().for_each(|&v| e.f64(v));
        (0..net.ensemble_size()).for_each(|u| e.f64s(layer.p(u)));
        (0..net.ensemble_size()).for_each(|u| e.f64s(layer.q(u)));
    }
    e.0
}

fn decode_network(bytes: &[u8]) -> Result<CereNetwork> {
    let mut d = Dec::new(bytes, "NETW");
    let seed = d.u64()?;
    let r = d.u32()? as usize;
    let n_layers = d.len(1)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let activation = d.str()?.parse().map_err(|_| d.err())?;
        let apply = d.u8()? != 0;
        let (m, n) = (d.u32()? as usize, d.u32()? as usize);
        if m.saturating_mul(n).saturating_mul(8) > d.remaining() {
            return Err(d.err());
        }
        let w: Vec<f64> = (0..m * n).map(|_| d.f64()).collect::<Result<_>>()?;
        let p = (0..r).map(|_| d.f64s()).collect::<Result<Vec<_>>>()?;
        let q = (0..r).map(|_| d.f64s()).collect::<Result<Vec<_>>>()?;
        layers.push(CereLayer::new(Matrix::new(m, n, w)?, p, q, activation, apply)?);
    }
    d.finish()?;
    CereNetwork::from_layers(layers, seed)
}

fn encode_deep_trees(trees: &[IsolationTree]) -> Vec<u8> {
    let mut e = Enc::new();
    e.u32(trees.len());
    for t in trees {
        e.u32(t.representation_index());
        e.u32(t.depth_limit() as usize);
        e.u32(t.width());
        e.indices(t.subsample());
        e.u32(t.nodes().len());
        for node in t.nodes() {
            e.u64(node.node_id);
            e.u32(node.depth as usize);
            e.u32(node.size as usize);
            match (node.split, node.children) {
                (Some(s), Some((l, r))) => {
                    e.u8(1);
                    e.u32(s.dim as usize);
                    e.f64(s.value);
                    e.u32(l as usize);
                    e.u32(r as usize);
                }
                _ => e.u8(0),
            }
        }
    }
    e.0
}

fn decode_deep_trees(bytes: &[u8]) -> Result<Vec<IsolationTree>> {
    let mut d = Dec::new(bytes, "TREE");
    let count = d.len(1)?;
    let mut trees = Vec::with_capacity(count);
    for _ in 0..count {
        let rep = d.u32()? as usize;
        let depth_limit = d.u32()?;
        let width = d.u32()? as usize;
        let subsample = d.indices()?;
        let n_nodes = d.len(17)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (node_id, depth, size) = (d.u64()?, d.u32()?, d.u32()?);
            let (split, children) = match d.u8()? {
                0 => (None, None),
                1 => {
                    let s = Split {
                        dim: d.u32()?,
                        value: d.f64()?,
                    };
                    (Some(s), Some((d.u32()?, d.u32()?)))
                }
                _ => return Err(d.err()),
            };
            nodes.push(TreeNode {
                node_id,
                depth,
                size,
                split,
                children,
            });
        }
        trees.push(IsolationTree::from_parts(nodes, rep, subsample, depth_limit, width)?);
    }
    d.finish()?;
    Ok(trees)
}

fn encode_itrees(trees: &[ITree]) -> Vec<u8> {
    fn node(e: &mut Enc, n: &INode) {
        match n {
            INode::Leaf { size, depth } => {
                e.u8(0);
                e.u32(*size as usize);
                e.u32(*depth as usize);
            }
            INode::Split {
                dim,
                value,
                size,
                depth,
                left,
                right,
            } => {
                e.u8(1);
                e.u32(*size as usize);
                e.u32(*depth as usize);
                e.u32(*dim as usize);
                e.f64(*value);
                node(e, left);
                node(e, right);
            }
        }
    }
    let mut e = Enc::new();
    e.u32(trees.len());
    for t in trees {
        e.indices(&t.subsample);
        node(&mut e, &t.root);
    }
    e.0
}

fn decode_itrees(bytes: &[u8]) -> Result<Vec<ITree>> {
    fn node(d: &mut Dec) -> Result<INode> {
        let (tag, size, depth) = (d.u8()?, d.u32()?, d.u32()?);
        if depth > MAX_DEPTH_LIMIT {
            return Err(d.err());
        }
        Ok(match tag {
            0 => INode::Leaf { size, depth },
            1 => INode::Split {
                dim: d.u32()?,
                value: d.f64()?,
                size,
                depth,
                left: Box::new(node(d)?),
                right: Box::new(node(d)?),
            },
            _ => return Err(d.err()),
        })
    }
    let mut d = Dec::new(bytes, "ITRE");
    let count = d.len(1)?;
    let mut trees = Vec::with_capacity(count);
    for _ in 0..count {
        let subsample = d.indices()?;
        trees.push(ITree {
            root: node(&mut d)?,
            subsample,
        });
    }
    d.finish()?;
    Ok(trees)
}

fn encode_etrees(trees: &[EifTree]) -> Vec<u8> {
    fn node(e: &mut Enc, n: &EifNode) {
        match n {
            EifNode::Leaf { size, depth } => {
                e.u8(0);
                e.u32(*size as usize);
                e.u32(*depth as usize);
            }
            EifNode::Split {
                normal_vector,
                intercept_point,
                size,
                depth,
                left,
                right,
            } => {
                e.u8(1);
                e.u32(*size as usize);
                e.u32(*depth as usize);
                e.f64s(normal_vector);
                e.f64s(intercept_point);
                node(e, left);
                node(e, right);
            }
        }
    }
    let mut e = Enc::new();
    e.u32(trees.len());
    for t in trees {
        e.indices(&t.subsample);
        node(&mut e, &t.root);
    }
    e.0
}

fn decode_etrees(bytes: &[u8]) -> Result<Vec<EifTree>> {
    fn node(d: &mut Dec) -> Result<EifNode> {
        let (tag, size, depth) = (d.u8()?, d.u32()?, d.u32()?);
        if depth > MAX_DEPTH_LIMIT {
            return Err(d.err());
        }
        Ok(match tag {
            0 => EifNode::Leaf { size, depth },
            1 => {
                let normal_vector = d.f64s()?;
                let intercept_point = d.f64s()?;
                if normal_vector.len() != intercept_point.len() {
                    return Err(d.err());
                }
                EifNode::Split {
                    normal_vector,
                    intercept_point,
                    size,
                    depth,
                    left: Box::new(node(d)?),
                    right: Box::new(node(d)?),
                }
            }
            _ => return Err(d.err()),
        })
    }
    let mut d = Dec::new(bytes, "ETRE");
    let count = d.len(1)?;
    let mut trees = Vec::with_capacity(count);
    for _ in 0..count {
        let subsample = d.indices()?;
        trees.push(EifTree {
            root: node(&mut d)?,
            subsample,
        });
    }
    d.finish()?;
    Ok(trees)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, BlobKind};

    fn small(algorithm: Algorithm) -> ModelFile {
        let config = RunConfig {
            algorithm,
            r: 3,
            t: 2,
            trees: 6,
            n: 64,
            seed: 5,
            ..RunConfig::default()
        };
        let x = gen_blobs(BlobKind::TwoBlob, 120, 1.0, 5).unwrap();
        let model = match algorithm {
            Algorithm::Dif => Model::Dif(DeepForest::fit(x.values(), &config.forest_config()).unwrap()),
            Algorithm::IForest => Model::IForest(IsolationForest::fit(x.values(), &config.baseline_config()).unwrap()),
            Algorithm::Eif => Model::Eif(ExtendedIsolationForest::fit(x.values(), &config.baseline_config()).unwrap()),
        };
        ModelFile { config, model }
    }

    #[test]
    fn round_trips_every_algorithm() {
        for algo in Algorithm::ALL {
            let m = small(algo);
            let bytes = m.encode();
            assert_eq!(&bytes[..8], MAGIC);
            let back = ModelFile::decode(&bytes).unwrap();
            assert_eq!(back, m, "{algo}");
            assert_eq!(back.encode(), bytes);
        }
    }

    #[test]
    fn rejects_damaged_files() {
        let bytes = small(Algorithm::Dif).encode();
        assert!(matches!(ModelFile::decode(b"not a model at all"), Err(Error::Model(_))));
        assert!(matches!(ModelFile::decode(&bytes[..bytes.len() - 3]), Err(Error::Model(_))));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(ModelFile::decode(&v2), Err(Error::Model(_))));
    }
}
