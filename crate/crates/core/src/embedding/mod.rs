//! Sentence vectors from token embeddings.
//!
//! Token-level embeddings come either from a binary [`cache`] written by an
//! external encoder export, or from the deterministic hashing
//! [`reference`] encoder. Sentence vectors are the plain mean over every
//! delivered token; the three sentence vectors of an instance are then
//! concatenated English, Hindi, Hinglish.

pub mod cache;
pub mod reference;

use thiserror::Error;

pub use cache::{read_embedding_cache, write_embedding_cache, CacheError, EmbeddingCache};
pub use reference::{encode_reference, ReferenceEncoder};

/// Hidden size of the pretrained sentence encoders the pipeline targets.
pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("sequence `{0}` has no tokens")]
    NoTokens(String),
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("sequence `{id}`: token {token} has length {actual}, expected {expected}")]
    TokenDim {
        id: String,
        token: usize,
        expected: usize,
        actual: usize,
    },
    #[error("sequence `{id}`: non-finite value at token {token}, component {component}")]
    NonFinite {
        id: String,
        token: usize,
        component: usize,
    },
    #[error("embedding `{actual}` does not belong to instance `{expected}`")]
    InstanceMismatch { expected: String, actual: String },
    #[error("empty or whitespace-only text")]
    EmptyText,
    #[error("reference encoder dimension {0} is below the minimum of 8")]
    DimTooSmall(usize),
    #[error("feature row `{id}` has segments {actual:?}, expected {expected:?}")]
    SegmentMismatch {
        id: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("feature matrix needs at least one row")]
    EmptyMatrix,
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// Token vectors of one sentence, all of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSequence {
    pub sentence_id: String,
    pub dim: usize,
    pub tokens: Vec<Vec<f64>>,
}

impl TokenEmbeddingSequence {
    pub fn new(sentence_id: impl Into<String>, dim: usize, tokens: Vec<Vec<f64>>) -> Result<Self> {
        let seq = TokenEmbeddingSequence {
            sentence_id: sentence_id.into(),
            dim,
            tokens,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        if self.tokens.is_empty() {
            return Err(EmbeddingError::NoTokens(self.sentence_id.clone()));
        }
        for (t, tok) in self.tokens.iter().enumerate() {
            if tok.len() != self.dim {
                return Err(EmbeddingError::TokenDim {
                    id: self.sentence_id.clone(),
                    token: t,
                    expected: self.dim,
                    actual: tok.len(),
                });
            }
            if let Some(c) = tok.iter().position(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite {
                    id: self.sentence_id.clone(),
                    token: t,
                    component: c,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding {
    pub sentence_id: String,
    pub values: Vec<f64>,
}

impl PooledEmbedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Component-wise arithmetic mean over all tokens.
pub fn mean_pool(seq: &TokenEmbeddingSequence) -> Result<PooledEmbedding> {
    seq.validate()?;
    let mut sum = vec![0.0f64; seq.dim];
    for tok in &seq.tokens {
        for (s, v) in sum.iter_mut().zip(tok) {
            *s += v;
        }
    }
    let n = seq.tokens.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(PooledEmbedding {
        sentence_id: seq.sentence_id.clone(),
        values: sum,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub instance_id: String,
    pub values: Vec<f64>,
    /// English, Hindi, Hinglish segment lengths.
    pub segment_dims: [usize; 3],
}

/// Concatenates English ∥ Hindi ∥ Hinglish. Every pooled vector must carry
/// the instance id as its sentence id.
pub fn assemble_features(
    english: &PooledEmbedding,
    hindi: &PooledEmbedding,
    hinglish: &PooledEmbedding,
    instance_id: &str,
) -> Result<FeatureVector> {
    let parts = [english, hindi, hinglish];
    if let Some(p) = parts.iter().find(|p| p.sentence_id != instance_id) {
        return Err(EmbeddingError::InstanceMismatch {
            expected: instance_id.to_string(),
            actual: p.sentence_id.clone(),
        });
    }
    let segment_dims = [english.dim(), hindi.dim(), hinglish.dim()];
    let mut values = Vec::with_capacity(segment_dims.iter().sum());
    for p in parts {
        values.extend_from_slice(&p.values);
    }
    Ok(FeatureVector {
        instance_id: instance_id.to_string(),
        values,
        segment_dims,
    })
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
    segments: Vec<usize>,
}

impl FeatureMatrix {
    /// Panics if `data.len() != n_rows * n_cols`.
    pub fn from_row_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            n_rows * n_cols,
            "data length must be n_rows * n_cols"
        );
        FeatureMatrix {
            n_rows,
            n_cols,
            data,
            segments: vec![n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self::from_row_major(rows.len(), n_cols, rows.concat())
    }

    /// Stacks triplet feature vectors; every row must share segment dims.
    pub fn from_vectors(vectors: &[FeatureVector]) -> Result<Self> {
        let first = vectors.first().ok_or(EmbeddingError::EmptyMatrix)?;
        let segs = first.segment_dims;
        let n_cols: usize = segs.iter().sum();
        let mut data = Vec::with_capacity(vectors.len() * n_cols);
        for v in vectors {
            if v.segment_dims != segs || v.values.len() != n_cols {
                return Err(EmbeddingError::SegmentMismatch {
                    id: v.instance_id.clone(),
                    expected: segs.to_vec(),
                    actual: v.segment_dims.to_vec(),
                });
            }
            data.extend_from_slice(&v.values);
        }
        Ok(FeatureMatrix {
            n_rows: vectors.len(),
            n_cols,
            data,
            segments: segs.to_vec(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn segments(&self) -> &[usize] {
        &self.segments
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }
}
