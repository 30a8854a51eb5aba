//! Deterministic bag-of-tokens encoder used as a stand-in for a frozen retriever.
//!
//! Tokens are maximal runs of alphanumeric characters; every `<`, `>` and `,`
//! inside a separator run is also emitted as a one-character token, so markup
//! leaves a trace in the embedding. Each token is hashed with FNV-1a 64 into
//! `bucket_count` buckets, the count vector is multiplied by a `{-1,+1}/sqrt(d)`
//! projection drawn row-major from `SplitMix64(projection_seed)` (sign is `+`
//! when the top bit of the draw is 0), and the result is L2-normalized.

use thiserror::Error;

use crate::format::FormatId;
use crate::rng::{derive_seed, SplitMix64};
use crate::serialize::{mixed_serialize, serialize, SerializeError};
use crate::store::{EmbeddingStore, StoreBuilder, StoreError, StoreMetadata};
use crate::table::Corpus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("cannot encode empty text")]
    EmptyText,
    #[error("bad encoder config: need bucket_count >= dimension >= 2 (got {buckets}, {dim})")]
    BadConfig { buckets: usize, dim: usize },
    #[error("no formats requested")]
    NoFormats,
    #[error(transparent)]
    Serialize(#[from] SerializeError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyEncoderConfig {
    pub bucket_count: usize,
    pub dimension: usize,
    pub projection_seed: u64,
    pub lowercase: bool,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        Self {
            bucket_count: 4096,
            dimension: 256,
            projection_seed: 0,
            lowercase: true,
        }
    }
}

impl ToyEncoderConfig {
    pub fn describe(&self) -> String {
        format!(
            "buckets={},dim={},projection_seed={},lowercase={}",
            self.bucket_count, self.dimension, self.projection_seed, self.lowercase
        )
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if lowercase {
                cur.extend(ch.to_lowercase());
            } else {
                cur.push(ch);
            }
            continue;
        }
        if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
        if matches!(ch, '<' | '>' | ',') {
            tokens.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Encoder with its projection matrix materialized once.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    cfg: ToyEncoderConfig,
    /// Row-major `bucket_count x dimension` signs.
    signs: Vec<i8>,
}

impl ToyEncoder {
    pub fn new(cfg: ToyEncoderConfig) -> Result<Self, EncodeError> {
        if cfg.dimension < 2 || cfg.bucket_count < cfg.dimension {
            return Err(EncodeError::BadConfig {
                buckets: cfg.bucket_count,
                dim: cfg.dimension,
            });
        }
        let mut rng = SplitMix64::new(cfg.projection_seed);
        let signs = (0..cfg.bucket_count * cfg.dimension)
            .map(|_| if rng.next_u64() >> 63 == 0 { 1 } else { -1 })
            .collect();
        Ok(Self { cfg, signs })
    }

    pub fn config(&self) -> &ToyEncoderConfig {
        &self.cfg
    }

    pub fn encode(&self, text: &str) -> Result<Vec<f64>, EncodeError> {
        let tokens = tokenize(text, self.cfg.lowercase);
        if tokens.is_empty() {
            return Err(EncodeError::EmptyText);
        }
        let b = self.cfg.bucket_count as u64;
        let mut counts = vec![0u32; self.cfg.bucket_count];
        for tok in &tokens {
            counts[(fnv1a64(tok.as_bytes()) % b) as usize] += 1;
        }
        let d = self.cfg.dimension;
        let scale = 1.0 / (d as f64).sqrt();
        let mut out = vec![0.0; d];
        for (bucket, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let row = &self.signs[bucket * d..(bucket + 1) * d];
            let w = f64::from(count) * scale;
            for (o, &s) in out.iter_mut().zip(row) {
                *o += w * f64::from(s);
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EncodeError::EmptyText);
        }
        out.iter_mut().for_each(|v| *v /= norm);
        Ok(out)
    }
}

/// One-shot encode; builds the projection on every call.
pub fn toy_encode(text: &str, cfg: &ToyEncoderConfig) -> Result<Vec<f64>, EncodeError> {
    if text.is_empty() {
        return Err(EncodeError::EmptyText);
    }
    ToyEncoder::new(cfg.clone())?.encode(text)
}

/// Serializes every table in every requested format and encodes the views.
///
/// The serialization seed of table `i` is `derive_seed(seed, i)`.
pub fn encode_corpus(
    corpus: &Corpus,
    formats: &[FormatId],
    seed: u64,
    cfg: &ToyEncoderConfig,
) -> Result<EmbeddingStore, EncodeError> {
    if formats.is_empty() {
        return Err(EncodeError::NoFormats);
    }
    let encoder = ToyEncoder::new(cfg.clone())?;
    let meta = StoreMetadata {
        corpus: corpus.name.clone(),
        encoder: "toy".into(),
        params: format!("{},seed={seed},normalized=true", cfg.describe()),
    };
    let mut builder = StoreBuilder::new(cfg.dimension, meta);
    for (i, t) in corpus.tables().iter().enumerate() {
        let table_seed = derive_seed(seed, i as u64);
        for &f in formats {
            let view = if f == FormatId::Mixed {
                mixed_serialize(t, table_seed)?
            } else {
                serialize(t, f, table_seed)?
            };
            builder.insert(f.as_str(), &t.id, encoder.encode(&view.text)?)?;
        }
    }
    Ok(builder.seal())
}
