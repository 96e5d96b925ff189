//! Shared-task metrics: F1, Cohen's kappa and mean squared error.
//!
//! Classes are the union of gold and predicted labels. Per-class F1 is
//! `2·tp / (2·tp + fp + fn)`, i.e. the harmonic mean of precision and
//! recall, and is 0 for a class that is never correctly predicted.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Subtask;
use crate::label::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("no label pairs to score")]
    Empty,
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    /// Per-class F1 weighted by gold support.
    #[default]
    Weighted,
    /// Unweighted mean over all classes.
    Macro,
    /// Pooled counts; equals accuracy for single-label data.
    Micro,
}

fn check(golds: &[Label], preds: &[Label]) -> Result<()> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    if golds.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Gold-by-predicted count matrix over the sorted union of labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<Label>,
    /// `counts[gold][pred]`
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(golds: &[Label], preds: &[Label]) -> Result<Self> {
        check(golds, preds)?;
        let mut labels: Vec<Label> = golds.iter().chain(preds).copied().collect();
        labels.sort();
        labels.dedup();
        let k = labels.len();
        let mut counts = vec![vec![0u64; k]; k];
        let idx = |l: &Label| labels.binary_search(l).expect("label in union");
        for (g, p) in golds.iter().zip(preds) {
            counts[idx(g)][idx(p)] += 1;
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn gold_support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn predicted(&self, k: usize) -> u64 {
        self.counts.iter().map(|row| row[k]).sum()
    }

    pub fn f1(&self, k: usize) -> f64 {
        let tp = self.counts[k][k];
        let denom = self.gold_support(k) + self.predicted(k);
        if tp == 0 || denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    pub fn f1_average(&self, average: F1Average) -> f64 {
        let k = self.labels.len();
        let n = self.total() as f64;
        match average {
            F1Average::Weighted => {
                (0..k)
                    .map(|c| self.gold_support(c) as f64 * self.f1(c))
                    .sum::<f64>()
                    / n
            }
            F1Average::Macro => (0..k).map(|c| self.f1(c)).sum::<f64>() / k as f64,
            F1Average::Micro => (0..k).map(|c| self.counts[c][c]).sum::<u64>() as f64 / n,
        }
    }

    pub fn cohens_kappa(&self) -> f64 {
        let n = self.total() as f64;
        let k = self.labels.len();
        let agree: u64 = (0..k).map(|c| self.counts[c][c]).sum();
        let p_o = agree as f64 / n;
        let p_e = (0..k)
            .map(|c| self.gold_support(c) as f64 * self.predicted(c) as f64)
            .sum::<f64>()
            / (n * n);
        if p_e == 1.0 {
            // both raters used one and the same class throughout
            return 1.0;
        }
        (p_o - p_e) / (1.0 - p_e)
    }
}

pub fn f1_score(golds: &[Label], preds: &[Label], average: F1Average) -> Result<f64> {
    Ok(ConfusionMatrix::new(golds, preds)?.f1_average(average))
}

pub fn f1_weighted(golds: &[Label], preds: &[Label]) -> Result<f64> {
    f1_score(golds, preds, F1Average::Weighted)
}

pub fn cohens_kappa(golds: &[Label], preds: &[Label]) -> Result<f64> {
    Ok(ConfusionMatrix::new(golds, preds)?.cohens_kappa())
}

/// Labels are compared as numbers.
pub fn mse(golds: &[Label], preds: &[Label]) -> Result<f64> {
    check(golds, preds)?;
    let sum: f64 = golds
        .iter()
        .zip(preds)
        .map(|(g, p)| {
            let d = g.value() - p.value();
            d * d
        })
        .sum();
    Ok(sum / golds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub subtask: Subtask,
    pub n: usize,
    pub f1_weighted: f64,
    pub cohens_kappa: f64,
    /// Kappa is only an official metric for subtask A.
    pub kappa_official: bool,
    pub mse: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(golds: &[Label], preds: &[Label], subtask: Subtask) -> Result<EvaluationReport> {
    let confusion = ConfusionMatrix::new(golds, preds)?;
    Ok(EvaluationReport {
        subtask,
        n: golds.len(),
        f1_weighted: confusion.f1_average(F1Average::Weighted),
        cohens_kappa: confusion.cohens_kappa(),
        kappa_official: subtask == Subtask::A,
        mse: mse(golds, preds)?,
        confusion,
    })
}

impl EvaluationReport {
    /// `key=value` lines, metrics to five decimals.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        writeln!(s, "subtask={}", self.subtask).unwrap();
        writeln!(s, "n={}", self.n).unwrap();
        writeln!(s, "f1_weighted={:.5}", self.f1_weighted).unwrap();
        writeln!(s, "cohens_kappa={:.5}", self.cohens_kappa).unwrap();
        writeln!(s, "kappa_official={}", self.kappa_official).unwrap();
        writeln!(s, "mse={:.5}", self.mse).unwrap();
        s
    }

    /// One-line console summary in the FS / CK / MSE order of the task tables.
    pub fn summary(&self) -> String {
        let ck = if self.kappa_official {
            format!("{:.5}", self.cohens_kappa)
        } else {
            format!("{:.5} (unofficial)", self.cohens_kappa)
        };
        format!(
            "subtask {}  n={}  FS {:.5}  CK {}  MSE {:.5}",
            self.subtask, self.n, self.f1_weighted, ck, self.mse
        )
    }
}
