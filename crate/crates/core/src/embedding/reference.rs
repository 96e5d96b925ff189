//! Deterministic stand-in for a pretrained contextual encoder.
//!
//! Text is NFC-normalised and split on Unicode whitespace. Each token is
//! wrapped as `<token>` and cut into character 3-grams; every 3-gram is
//! hashed (FNV-1a 64 over the little-endian seed followed by the 3-gram's
//! UTF-8 bytes, then the SplitMix64 finaliser) to a bucket `h % dim` and a
//! sign taken from the top bit. The signed buckets are summed and scaled to
//! unit Euclidean norm. If the 3-grams cancel exactly, the first 3-gram's
//! signed basis vector is used instead.
//!
//! The output carries no semantics beyond character overlap; it exists so
//! the pipeline runs and is testable without model checkpoints.

use unicode_normalization::UnicodeNormalization;

use super::{EmbeddingError, Result, TokenEmbeddingSequence};
use crate::rng::mix64;

pub const MIN_DIM: usize = 8;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceEncoder {
    dim: usize,
    seed: u64,
}

impl ReferenceEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(EmbeddingError::DimTooSmall(dim));
        }
        Ok(ReferenceEncoder { dim, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encode(&self, sentence_id: &str, text: &str) -> Result<TokenEmbeddingSequence> {
        let normalized: String = text.nfc().collect();
        let tokens: Vec<Vec<f64>> = normalized
            .split_whitespace()
            .map(|t| self.token_vector(t))
            .collect();
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        Ok(TokenEmbeddingSequence {
            sentence_id: sentence_id.to_string(),
            dim: self.dim,
            tokens,
        })
    }

    fn bucket(&self, gram: &str) -> (usize, f64) {
        let mut h = FNV_OFFSET;
        for b in self.seed.to_le_bytes().iter().chain(gram.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        let h = mix64(h);
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dim as u64) as usize, sign)
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let chars: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        let mut v = vec![0.0; self.dim];
        let mut first = None;
        let mut gram = String::with_capacity(12);
        for w in chars.windows(3) {
            gram.clear();
            gram.extend(w);
            let (idx, sign) = self.bucket(&gram);
            first.get_or_insert((idx, sign));
            v[idx] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            let (idx, sign) = first.expect("a wrapped token has at least one 3-gram");
            v[idx] = sign;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Encodes `text` with an empty sentence id.
pub fn encode_reference(text: &str, dim: usize, seed: u64) -> Result<TokenEmbeddingSequence> {
    ReferenceEncoder::new(dim, seed)?.encode("", text)
}
