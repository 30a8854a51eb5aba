//! Sealed embedding stores and the `EMB1` binary file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "EMB1" | u32 dim | u64 count | u16 meta_len | meta (UTF-8)
//! count x ( u16 key_len | key "<format>/<table>" | dim x f32 )
//! ```
//!
//! Records are sorted by `(format, table)`. The metadata line reads
//! `corpus=<name>;encoder=<name>;params=<text>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("bad magic {0:?}, expected \"EMB1\"")]
    BadMagic(Vec<u8>),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("zero vector for {0}")]
    ZeroVector(String),
    #[error("file truncated")]
    TruncatedFile,
    #[error("malformed key {0:?}")]
    BadKey(String),
    #[error("malformed metadata {0:?}")]
    BadMetadata(String),
    #[error("invalid UTF-8 in store file")]
    Utf8,
    #[error("{0} too long for a u16 length prefix")]
    TooLong(&'static str),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StoreMetadata {
    pub corpus: String,
    pub encoder: String,
    pub params: String,
}

impl StoreMetadata {
    pub fn to_line(&self) -> String {
        format!("corpus={};encoder={};params={}", self.corpus, self.encoder, self.params)
    }

    pub fn parse(line: &str) -> Result<Self, StoreError> {
        let bad = || StoreError::BadMetadata(line.to_string());
        let rest = line.strip_prefix("corpus=").ok_or_else(bad)?;
        let (corpus, rest) = rest.split_once(";encoder=").ok_or_else(bad)?;
        let (encoder, params) = rest.split_once(";params=").ok_or_else(bad)?;
        Ok(Self {
            corpus: corpus.into(),
            encoder: encoder.into(),
            params: params.into(),
        })
    }
}

/// Key of one entry: `(format id, table id)`.
pub type StoreKey = (String, String);

/// Immutable map from `(format, table)` to a `dimension`-long vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    entries: BTreeMap<StoreKey, Vec<f64>>,
    pub metadata: StoreMetadata,
}

/// Mutable staging area; [`StoreBuilder::seal`] produces the store.
#[derive(Debug, Clone)]
pub struct StoreBuilder {
    dimension: usize,
    entries: BTreeMap<StoreKey, Vec<f64>>,
    metadata: StoreMetadata,
}

impl StoreBuilder {
    pub fn new(dimension: usize, metadata: StoreMetadata) -> Self {
        Self {
            dimension,
            entries: BTreeMap::new(),
            metadata,
        }
    }

    pub fn insert(&mut self, format: &str, table: &str, vector: Vec<f64>) -> Result<(), StoreError> {
        let key = format!("{format}/{table}");
        if format.is_empty() || format.contains('/') || table.is_empty() {
            return Err(StoreError::BadKey(key));
        }
        if vector.len() != self.dimension {
            return Err(StoreError::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(StoreError::NonFiniteValue(key));
        }
        if vector.iter().all(|&v| v == 0.0) {
            return Err(StoreError::ZeroVector(key));
        }
        match self.entries.entry((format.to_string(), table.to_string())) {
            std::collections::btree_map::Entry::Occupied(_) => Err(StoreError::DuplicateKey(key)),
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(vector);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seal(self) -> EmbeddingStore {
        EmbeddingStore {
            dimension: self.dimension,
            entries: self.entries,
            metadata: self.metadata,
        }
    }
}

impl EmbeddingStore {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, format: &str, table: &str) -> Option<&[f64]> {
        self.entries
            .get(&(format.to_string(), table.to_string()))
            .map(Vec::as_slice)
    }

    /// Entries in canonical `(format, table)` order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &[f64])> {
        self.entries
            .iter()
            .map(|((f, t), v)| (f.as_str(), t.as_str(), v.as_slice()))
    }

    /// Distinct format ids, sorted.
    pub fn formats(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (f, _) in self.entries.keys() {
            if out.last() != Some(f) {
                out.push(f.clone());
            }
        }
        out
    }

    /// Distinct table ids, sorted.
    pub fn table_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.entries.keys().map(|(_, t)| t.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// `(table, vector)` pairs of one format, sorted by table id.
    pub fn format_view(&self, format: &str) -> Vec<(&str, &[f64])> {
        self.iter()
            .filter(|(f, _, _)| *f == format)
            .map(|(_, t, v)| (t, v))
            .collect()
    }

    /// Per table: the `(format, vector)` views it has, tables sorted.
    pub fn views_by_table(&self) -> BTreeMap<&str, Vec<(&str, &[f64])>> {
        let mut out: BTreeMap<&str, Vec<(&str, &[f64])>> = BTreeMap::new();
        for (f, t, v) in self.iter() {
            out.entry(t).or_default().push((f, v));
        }
        out
    }

    /// Rebuilds a store by mapping every vector, keeping keys.
    pub fn map_vectors<E>(
        &self,
        metadata: StoreMetadata,
        mut f: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    ) -> Result<EmbeddingStore, E>
    where
        E: From<StoreError>,
    {
        let mut b = StoreBuilder::new(self.dimension, metadata);
        for (fmt, t, v) in self.iter() {
            b.insert(fmt, t, f(v)?)?;
        }
        Ok(b.seal())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let meta = self.metadata.to_line();
        let meta_len = u16::try_from(meta.len()).map_err(|_| StoreError::TooLong("metadata"))?;
        let mut out = Vec::with_capacity(18 + meta.len() + self.len() * (self.dimension * 4 + 24));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for ((f, t), v) in &self.entries {
            let key = format!("{f}/{t}");
            let key_len = u16::try_from(key.len()).map_err(|_| StoreError::TooLong("key"))?;
            out.extend_from_slice(&key_len.to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for &x in v {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(StoreError::BadMagic(magic.to_vec()));
        }
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let meta_len = r.u16()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?).map_err(|_| StoreError::Utf8)?;
        let mut builder = StoreBuilder::new(dim, StoreMetadata::parse(meta)?);
        for _ in 0..count {
            let key_len = r.u16()? as usize;
            let key = std::str::from_utf8(r.take(key_len)?).map_err(|_| StoreError::Utf8)?;
            let (f, t) = key.split_once('/').ok_or_else(|| StoreError::BadKey(key.to_string()))?;
            let raw = r.take(dim * 4)?;
            let v: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            builder.insert(f, t, v)?;
        }
        if r.pos != bytes.len() {
            // Trailing bytes mean the records were written with another width.
            return Err(StoreError::DimensionMismatch {
                expected: dim,
                found: dim + (bytes.len() - r.pos) / 4,
            });
        }
        Ok(builder.seal())
    }

    /// Copy with every value rounded through `f32`, i.e. what an export
    /// followed by an import yields.
    pub fn quantized(&self) -> EmbeddingStore {
        let mut out = self.clone();
        for v in out.entries.values_mut() {
            v.iter_mut().for_each(|x| *x = f64::from(*x as f32));
        }
        out
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).ok_or(StoreError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(StoreError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, StoreError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn export_store(store: &EmbeddingStore, path: &Path) -> Result<(), StoreError> {
    std::fs::write(path, store.to_bytes()?)?;
    Ok(())
}

pub fn import_store(path: &Path) -> Result<EmbeddingStore, StoreError> {
    EmbeddingStore::from_bytes(&std::fs::read(path)?)
}

/// Ingests vectors produced elsewhere from a text file with one
/// `<format>/<table><TAB>v1<TAB>v2…` line per entry.
///
/// The dimension is taken from the first line. `normalized=true|false` is
/// appended to the params, true when every vector has unit norm within 1e-6.
pub fn ingest_text_vectors(text: &str, corpus: &str, encoder: &str) -> Result<EmbeddingStore, StoreError> {
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split('\t');
        let key = parts.next().unwrap_or_default();
        let (f, t) = key.split_once('/').ok_or_else(|| StoreError::BadKey(key.to_string()))?;
        let v = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| StoreError::NonFiniteValue(key.to_string()))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push((f.to_string(), t.to_string(), v));
    }
    let dim = rows.first().map_or(0, |r| r.2.len());
    let normalized = rows.iter().all(|(_, _, v)| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n - 1.0).abs() <= 1e-6
    });
    let mut params = String::new();
    let _ = write!(params, "source=text,normalized={normalized}");
    let mut b = StoreBuilder::new(
        dim,
        StoreMetadata {
            corpus: corpus.into(),
            encoder: encoder.into(),
            params,
        },
    );
    for (f, t, v) in rows {
        b.insert(&f, &t, v)?;
    }
    Ok(b.seal())
}
