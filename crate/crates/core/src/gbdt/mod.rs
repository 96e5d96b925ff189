//! Multiclass gradient-boosted decision trees with a softmax logloss objective.
//!
//! Each round computes class probabilities `p` from the current scores and,
//! for every class `k`, grows one regression tree on the negative gradients
//! `g = y_k - p_k` with hessians `h = p_k (1 - p_k)` and Newton leaves
//! `Σg / (Σh + λ)`. The tree, scaled by the learning rate, is added to the
//! class-`k` score. Scores start at the log class priors.
//!
//! There is no sampling of rows or features, so training is a pure function
//! of its inputs: identical data and config give bit-identical models.

mod io;
pub mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::class_vocabulary;
use crate::embedding::FeatureMatrix;
use crate::label::Label;

pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use tree::{Node, RegressionTree, SortedColumns, TreeParams};

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("training needs at least two distinct classes, got {0}")]
    SingleClass(usize),
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("no training rows")]
    Empty,
    #[error("feature matrix has no columns")]
    NoFeatures,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    Dim { expected: usize, actual: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file at byte {offset}: {message}")]
    Format { offset: usize, message: String },
}

pub type Result<T, E = GbdtError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf_reg: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 200,
            learning_rate: 0.1,
            max_depth: 4,
            min_samples_leaf: 5,
            l2_leaf_reg: 1.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GbdtError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning_rate {} not in (0, 1]",
                self.learning_rate
            ));
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive".into());
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive".into());
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad(format!(
                "l2_leaf_reg {} must be finite and >= 0",
                self.l2_leaf_reg
            ));
        }
        if u32::try_from(self.iterations).is_err() || u32::try_from(self.max_depth).is_err() {
            return bad("iterations and max_depth must fit in 32 bits".into());
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            l2_leaf_reg: self.l2_leaf_reg,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedEnsemble {
    pub class_labels: Vec<Label>,
    pub base_scores: Vec<f64>,
    /// Round-major: the tree for round `t`, class `k` is `trees[t * K + k]`.
    pub trees: Vec<RegressionTree>,
    pub feature_dim: usize,
    /// Lengths of the concatenated input segments; sums to `feature_dim`.
    pub segment_dims: Vec<usize>,
    pub config: TrainConfig,
}

impl BoostedEnsemble {
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn iterations(&self) -> usize {
        self.trees.len() / self.n_classes().max(1)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(GbdtError::Dim {
                expected: self.feature_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Raw per-class scores, accumulated in the same order as during training.
    pub fn raw_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let k = self.n_classes();
        let mut scores = self.base_scores.clone();
        let lr = self.config.learning_rate;
        for round in self.trees.chunks_exact(k) {
            for (s, tree) in scores.iter_mut().zip(round) {
                *s += lr * tree.predict(x);
            }
        }
        Ok(scores)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.raw_scores(x)?))
    }

    /// Most probable label; ties go to the lowest class index.
    pub fn predict_class(&self, x: &[f64]) -> Result<Label> {
        Ok(self.class_labels[argmax(&self.predict_proba(x)?)])
    }

    pub fn predict_proba_matrix(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_proba(x.row(i)))
            .collect()
    }
}

/// Softmax with max-shift; entries are floored at the smallest positive
/// normal so probabilities stay strictly positive.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter()
        .map(|e| (e / sum).max(f64::MIN_POSITIVE))
        .collect()
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean negative log-likelihood of the true classes.
pub fn logloss(probs: &[Vec<f64>], targets: &[usize]) -> f64 {
    let total: f64 = probs.iter().zip(targets).map(|(p, &t)| -p[t].ln()).sum();
    total / targets.len() as f64
}

pub fn fit(x: &FeatureMatrix, labels: &[Label], config: &TrainConfig) -> Result<BoostedEnsemble> {
    fit_with_history(x, labels, config).map(|(m, _)| m)
}

/// Like [`fit`], also returning the training logloss before the first round
/// (prior-only model) and after each round: `iterations + 1` values.
pub fn fit_with_history(
    x: &FeatureMatrix,
    labels: &[Label],
    config: &TrainConfig,
) -> Result<(BoostedEnsemble, Vec<f64>)> {
    config.validate()?;
    let n = x.n_rows();
    if n != labels.len() {
        return Err(GbdtError::LengthMismatch {
            rows: n,
            labels: labels.len(),
        });
    }
    if n == 0 {
        return Err(GbdtError::Empty);
    }
    if x.n_cols() == 0 {
        return Err(GbdtError::NoFeatures);
    }
    for (row, r) in x.rows().enumerate() {
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(GbdtError::NonFinite { row, col });
        }
    }
    let classes = class_vocabulary(labels).map_err(|_| GbdtError::Empty)?;
    let k = classes.len();
    if k < 2 {
        return Err(GbdtError::SingleClass(k));
    }
    let targets: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in vocabulary"))
        .collect();

    let mut counts = vec![0usize; k];
    for &t in &targets {
        counts[t] += 1;
    }
    let base_scores: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();

    let sorted = SortedColumns::new(x);
    let params = config.tree_params();
    let lr = config.learning_rate;
    let mut scores: Vec<Vec<f64>> = vec![base_scores.clone(); n];
    let mut probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
    let mut history = Vec::with_capacity(config.iterations + 1);
    history.push(logloss(&probs, &targets));
    let mut trees = Vec::with_capacity(config.iterations * k);

    for _ in 0..config.iterations {
        let round: Vec<(RegressionTree, Vec<u32>)> = (0..k)
            .into_par_iter()
            .map(|class| {
                let mut grad = Vec::with_capacity(n);
                let mut hess = Vec::with_capacity(n);
                for (p, &t) in probs.iter().zip(&targets) {
                    let pk = p[class];
                    let y = if t == class { 1.0 } else { 0.0 };
                    grad.push(y - pk);
                    hess.push(pk * (1.0 - pk));
                }
                tree::TreeBuilder::new(x, &sorted, &grad, &hess, &params).build()
            })
            .collect();
        for (class, (tree, leaf_of)) in round.into_iter().enumerate() {
            for (s, &leaf) in scores.iter_mut().zip(&leaf_of) {
                let Node::Leaf { value } = tree.nodes[leaf as usize] else {
                    unreachable!("rows end in leaves")
                };
                s[class] += lr * value;
            }
            trees.push(tree);
        }
        probs = scores.par_iter().map(|s| softmax(s)).collect();
        history.push(logloss(&probs, &targets));
    }

    let model = BoostedEnsemble {
        class_labels: classes,
        base_scores,
        trees,
        feature_dim: x.n_cols(),
        segment_dims: x.segments().to_vec(),
        config: *config,
    };
    Ok((model, history))
}
