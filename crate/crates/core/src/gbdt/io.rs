//! `CMQM` model files. Layout is documented in `docs/model-format.md`.

use std::fs;
use std::path::Path;

use super::{BoostedEnsemble, GbdtError, Node, RegressionTree, Result, TrainConfig};
use crate::label::Label;

pub const MODEL_MAGIC: &[u8; 4] = b"CMQM";
pub const MODEL_VERSION: u16 = 1;

const LEAF: u8 = 0;
const SPLIT: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("value fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_model(model: &BoostedEnsemble) -> Vec<u8> {
    let k = model.n_classes();
    let c = &model.config;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    w.u32(k);
    w.u32(model.feature_dim);
    w.u32(model.iterations());
    w.f64(c.learning_rate);
    w.u32(c.max_depth);
    w.u32(c.min_samples_leaf);
    w.f64(c.l2_leaf_reg);
    w.u64(c.seed);
    w.u32(model.segment_dims.len());
    for &s in &model.segment_dims {
        w.u32(s);
    }
    for l in &model.class_labels {
        w.f64(l.value());
    }
    for &b in &model.base_scores {
        w.f64(b);
    }
    for tree in &model.trees {
        w.u32(tree.nodes.len());
        for node in &tree.nodes {
            match *node {
                Node::Leaf { value } => {
                    w.u8(LEAF);
                    w.f64(value);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    w.u8(SPLIT);
                    w.u32(feature as usize);
                    w.f64(threshold);
                    w.u32(left as usize);
                    w.u32(right as usize);
                }
            }
        }
    }
    w.0
}

pub fn save_model(model: &BoostedEnsemble, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|source| GbdtError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<BoostedEnsemble> {
    let bytes = fs::read(path).map_err(|source| GbdtError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_model(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> GbdtError {
        GbdtError::Format {
            offset,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(self.pos, format!("truncated {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn finite(&mut self, what: &str) -> Result<f64> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(self.err(at, format!("non-finite {what}")));
        }
        Ok(v)
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<BoostedEnsemble> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(r.err(0, "bad magic, expected \"CMQM\""));
    }
    let version = r.u16("version")?;
    if version != MODEL_VERSION {
        return Err(r.err(4, format!("unsupported model version {version}")));
    }
    let k = r.u32("class count")?;
    let feature_dim = r.u32("feature dim")?;
    let iterations = r.u32("iterations")?;
    let config_at = r.pos;
    let config = TrainConfig {
        iterations,
        learning_rate: r.finite("learning rate")?,
        max_depth: r.u32("max depth")?,
        min_samples_leaf: r.u32("min samples leaf")?,
        l2_leaf_reg: r.finite("l2 leaf reg")?,
        seed: r.u64("seed")?,
    };
    config
        .validate()
        .map_err(|e| r.err(config_at, e.to_string()))?;
    if k < 2 {
        return Err(r.err(6, format!("class count {k} < 2")));
    }
    if feature_dim == 0 {
        return Err(r.err(10, "feature dim is zero"));
    }
    // every count below is bounded by the bytes it needs
    if k > bytes.len() / 16 {
        return Err(r.err(6, "class count exceeds file size"));
    }
    let seg_at = r.pos;
    let n_seg = r.u32("segment count")?;
    if n_seg > (bytes.len() - r.pos) / 4 {
        return Err(r.err(seg_at, "segment count exceeds file size"));
    }
    let segment_dims = (0..n_seg)
        .map(|_| r.u32("segment dim"))
        .collect::<Result<Vec<_>>>()?;
    if segment_dims.iter().sum::<usize>() != feature_dim {
        return Err(r.err(seg_at, "segment dims do not sum to feature dim"));
    }
    let labels_at = r.pos;
    let class_labels = (0..k)
        .map(|_| r.finite("class label").map(|v| Label::new(v).unwrap()))
        .collect::<Result<Vec<_>>>()?;
    if class_labels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(r.err(labels_at, "class labels not strictly ascending"));
    }
    let base_scores = (0..k)
        .map(|_| r.finite("base score"))
        .collect::<Result<Vec<_>>>()?;

    let n_trees = iterations
        .checked_mul(k)
        .filter(|&t| t <= (bytes.len() - r.pos) / 13)
        .ok_or_else(|| r.err(14, "tree count exceeds file size"))?;
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let tree_at = r.pos;
        let n_nodes = r.u32("node count")?;
        if n_nodes == 0 || n_nodes > (bytes.len() - r.pos) / 9 {
            return Err(r.err(tree_at, format!("tree {t}: bad node count {n_nodes}")));
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut referenced = vec![false; n_nodes];
        for i in 0..n_nodes {
            let at = r.pos;
            match r.u8("node tag")? {
                LEAF => nodes.push(Node::Leaf {
                    value: r.finite("leaf value")?,
                }),
                SPLIT => {
                    let feature = r.u32("feature index")?;
                    let threshold = r.finite("threshold")?;
                    let left = r.u32("left child")?;
                    let right = r.u32("right child")?;
                    if feature >= feature_dim {
                        return Err(r.err(at, format!("tree {t}: feature {feature} out of range")));
                    }
                    for child in [left, right] {
                        if child <= i || child >= n_nodes || referenced[child] {
                            return Err(r.err(
                                at,
                                format!("tree {t}: bad child index {child} at node {i}"),
                            ));
                        }
                        referenced[child] = true;
                    }
                    nodes.push(Node::Split {
                        feature: feature as u32,
                        threshold,
                        left: left as u32,
                        right: right as u32,
                    });
                }
                tag => return Err(r.err(at, format!("tree {t}: unknown node tag {tag}"))),
            }
        }
        if referenced.iter().skip(1).any(|&seen| !seen) {
            return Err(r.err(tree_at, format!("tree {t}: unreachable nodes")));
        }
        trees.push(RegressionTree::from_nodes(nodes));
    }
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(BoostedEnsemble {
        class_labels,
        base_scores,
        trees,
        feature_dim,
        segment_dims,
        config,
    })
}
