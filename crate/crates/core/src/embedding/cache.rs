//! Binary token-embedding cache.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        4 bytes  "CMQE"
//! version      u16      1
//! dim          u32
//! record_count u64
//! record_count × {
//!     id_len       u16
//!     id           id_len bytes, UTF-8
//!     token_count  u32      (≥ 1)
//!     values       token_count × dim binary32, row-major
//! }
//! ```
//!
//! Values are held as `f64` in memory and stored as binary32, so writing
//! rounds each value to the nearest `f32` once; anything read from a cache
//! is written back bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use thiserror::Error;

use super::TokenEmbeddingSequence;

pub const MAGIC: &[u8; 4] = b"CMQE";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed cache at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("cannot write cache: {0}")]
    Write(String),
}

pub type Result<T, E = CacheError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    pub dim: usize,
    /// In file order.
    pub entries: IndexMap<String, TokenEmbeddingSequence>,
}

impl EmbeddingCache {
    pub fn get(&self, id: &str) -> Option<&TokenEmbeddingSequence> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn encode_cache(dim: usize, entries: &[TokenEmbeddingSequence]) -> Result<Vec<u8>> {
    if dim == 0 || dim > u32::MAX as usize {
        return Err(CacheError::Write(format!("unsupported dim {dim}")));
    }
    let payload: usize = entries
        .iter()
        .map(|e| 2 + e.sentence_id.len() + 4 + e.len() * dim * 4)
        .sum();
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());

    let mut seen = std::collections::HashSet::with_capacity(entries.len());
    for e in entries {
        if e.dim != dim {
            return Err(CacheError::Write(format!(
                "`{}` has dim {}, cache dim is {dim}",
                e.sentence_id, e.dim
            )));
        }
        e.validate()
            .map_err(|err| CacheError::Write(err.to_string()))?;
        if !seen.insert(e.sentence_id.as_str()) {
            return Err(CacheError::Write(format!(
                "duplicate id `{}`",
                e.sentence_id
            )));
        }
        let id_len = u16::try_from(e.sentence_id.len()).map_err(|_| {
            CacheError::Write(format!("id of {} bytes exceeds u16", e.sentence_id.len()))
        })?;
        let count = u32::try_from(e.len())
            .map_err(|_| CacheError::Write("token count exceeds u32".into()))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(e.sentence_id.as_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        for v in e.tokens.iter().flatten() {
            let f = *v as f32;
            if !f.is_finite() {
                return Err(CacheError::Write(format!(
                    "`{}`: {v} overflows binary32",
                    e.sentence_id
                )));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_embedding_cache(
    path: &Path,
    dim: usize,
    entries: &[TokenEmbeddingSequence],
) -> Result<()> {
    let bytes = encode_cache(dim, entries)?;
    fs::write(path, bytes).map_err(|source| CacheError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_embedding_cache(path: &Path) -> Result<EmbeddingCache> {
    let bytes = fs::read(path).map_err(|source| CacheError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_cache(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CacheError::Format {
                offset: self.pos,
                message: format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.buf.len() - self.pos
                ),
            }),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn fail(&self, offset: usize, message: impl Into<String>) -> CacheError {
        CacheError::Format {
            offset,
            message: message.into(),
        }
    }
}

pub fn decode_cache(bytes: &[u8]) -> Result<EmbeddingCache> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(cur.fail(0, "bad magic, expected \"CMQE\""));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(cur.fail(4, format!("unsupported version {version}")));
    }
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(cur.fail(6, "dim is zero"));
    }
    let count = cur.u64("record count")?;
    // Each record needs at least 2 + 4 + 4·dim bytes.
    let min_record = 6 + 4 * dim as u64;
    if count > (bytes.len() - HEADER_LEN) as u64 / min_record {
        return Err(cur.fail(10, format!("record count {count} exceeds file size")));
    }

    let mut entries = IndexMap::with_capacity(count as usize);
    for _ in 0..count {
        let start = cur.pos;
        let id_len = cur.u16("id length")? as usize;
        let id_off = cur.pos;
        let id = std::str::from_utf8(cur.take(id_len, "id")?)
            .map_err(|e| cur.fail(id_off, format!("id is not UTF-8: {e}")))?
            .to_string();
        let tc_off = cur.pos;
        let n_tokens = cur.u32("token count")? as usize;
        if n_tokens == 0 {
            return Err(cur.fail(tc_off, format!("record `{id}` has zero tokens")));
        }
        let n_values = n_tokens
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| cur.fail(tc_off, "token count overflows"))?;
        let values_off = cur.pos;
        let raw = cur.take(n_values, "token values")?;
        let mut tokens = Vec::with_capacity(n_tokens);
        for (t, row) in raw.chunks_exact(dim * 4).enumerate() {
            let mut tok = Vec::with_capacity(dim);
            for (c, b) in row.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(b.try_into().unwrap());
                if !v.is_finite() {
                    return Err(cur.fail(
                        values_off + (t * dim + c) * 4,
                        format!("record `{id}`: non-finite value"),
                    ));
                }
                tok.push(f64::from(v));
            }
            tokens.push(tok);
        }
        if entries.contains_key(&id) {
            return Err(cur.fail(start, format!("duplicate id `{id}`")));
        }
        entries.insert(
            id.clone(),
            TokenEmbeddingSequence {
                sentence_id: id,
                dim,
                tokens,
            },
        );
    }
    if cur.pos != bytes.len() {
        return Err(cur.fail(cur.pos, format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(EmbeddingCache { dim, entries })
}
