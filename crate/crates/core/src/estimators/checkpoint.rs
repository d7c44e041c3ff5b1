//! Binary model checkpoints.
//!
//! Every file starts with the tag `NESC`, a version byte (1) and a type byte, followed by a
//! little-endian body:
//!
//! * MLP (type 1): seed `u64`, layer count `u32`, each width `u32`, parameter count `u64`,
//!   then the parameters as `f64` in [`MlpEstimator::parameters`] order.
//! * Tree (type 2): seed `u64` (always 0), classes `u32`, input dimension `u32`, max depth
//!   `u32`, node count `u32`, then the nodes in preorder as `f64` values: a leaf is `0`
//!   followed by its class probabilities, a split is `1`, the feature index and the threshold.

use std::io::{Read, Write};
use std::path::Path;

use super::{MlpEstimator, ProbabilityEstimator, TreeEstimator, TreeNode};
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"NESC";
const VERSION: u8 = 1;
const TYPE_MLP: u8 = 1;
const TYPE_TREE: u8 = 2;

/// A trained model of either supported type.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mlp(MlpEstimator),
    Tree(TreeEstimator),
}

impl Model {
    pub fn as_estimator(&self) -> &dyn ProbabilityEstimator {
        match self {
            Model::Mlp(m) => m,
            Model::Tree(t) => t,
        }
    }
}

pub fn write_checkpoint(model: &Model, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    match model {
        Model::Mlp(m) => {
            buf.push(TYPE_MLP);
            buf.extend_from_slice(&m.seed().to_le_bytes());
            buf.extend_from_slice(&(m.widths().len() as u32).to_le_bytes());
            for &w in m.widths() {
                buf.extend_from_slice(&(w as u32).to_le_bytes());
            }
            let params = m.parameters();
            buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
            for p in params {
                buf.extend_from_slice(&p.to_le_bytes());
            }
        }
        Model::Tree(t) => {
            buf.push(TYPE_TREE);
            buf.extend_from_slice(&0u64.to_le_bytes());
            for v in [t.classes, t.dim, t.max_depth, t.nodes.len()] {
                buf.extend_from_slice(&(v as u32).to_le_bytes());
            }
            let mut stream = Vec::new();
            preorder(&t.nodes, 0, &mut stream);
            for v in stream {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

fn preorder(nodes: &[TreeNode], i: usize, out: &mut Vec<f64>) {
    match &nodes[i] {
        TreeNode::Leaf { probs } => {
            out.push(0.0);
            out.extend(probs);
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            out.extend([1.0, *feature as f64, *threshold]);
            preorder(nodes, *left, out);
            preorder(nodes, *right, out);
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::parse(self.bytes.len() as u64, "checkpoint truncated"))?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_node(
    cur: &mut Cursor<'_>,
    classes: usize,
    nodes: &mut Vec<TreeNode>,
    budget: usize,
) -> Result<usize> {
    if nodes.len() >= budget {
        return Err(Error::parse(
            cur.pos as u64,
            "more tree nodes than declared",
        ));
    }
    let at = cur.pos as u64;
    let id = nodes.len();
    match cur.f64()? {
        0.0 => {
            let probs = (0..classes)
                .map(|_| cur.f64())
                .collect::<Result<Vec<_>>>()?;
            nodes.push(TreeNode::Leaf { probs });
        }
        1.0 => {
            let feature = cur.f64()? as usize;
            let threshold = cur.f64()?;
            nodes.push(TreeNode::Leaf { probs: Vec::new() });
            let left = read_node(cur, classes, nodes, budget)?;
            let right = read_node(cur, classes, nodes, budget)?;
            nodes[id] = TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            };
        }
        other => return Err(Error::parse(at, format!("unknown node marker {other}"))),
    }
    Ok(id)
}

pub fn read_checkpoint(mut input: impl Read) -> Result<Model> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != MAGIC {
        return Err(Error::parse(0, "not a checkpoint file"));
    }
    let version = cur.u8()?;
    if version != VERSION {
        return Err(Error::parse(
            4,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let model = match cur.u8()? {
        TYPE_MLP => {
            let seed = cur.u64()?;
            let layers = cur.u32()?;
            let widths = (0..layers).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
            let count = cur.u64()? as usize;
            let params = (0..count).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            Model::Mlp(MlpEstimator::from_parts(widths, seed, &params)?)
        }
        TYPE_TREE => {
            let _seed = cur.u64()?;
            let classes = cur.u32()?;
            let dim = cur.u32()?;
            let max_depth = cur.u32()?;
            let count = cur.u32()?;
            let mut nodes = Vec::with_capacity(count);
            read_node(&mut cur, classes, &mut nodes, count)?;
            if nodes.len() != count {
                return Err(Error::parse(
                    cur.pos as u64,
                    "fewer tree nodes than declared",
                ));
            }
            Model::Tree(TreeEstimator::from_nodes(classes, dim, max_depth, nodes)?)
        }
        t => return Err(Error::parse(5, format!("unknown model type {t}"))),
    };
    if cur.pos != bytes.len() {
        return Err(Error::parse(
            cur.pos as u64,
            "trailing bytes after checkpoint",
        ));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    read_checkpoint(std::fs::File::open(path)?)
}
