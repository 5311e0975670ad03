//! Persisted dense vector index with exact top-k cosine retrieval.
//!
//! File layout (little-endian):
//!
//! ```text
//! offset 0   magic  b"CEGIDX1\0"
//! offset 8   u32    dim
//! offset 12  u32    count
//! offset 16  count × dim f32, row-major; row i is chunk id i
//! ```

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, DocStore};
use crate::embed::{cosine_from_parts, dot, norm, EmbedError, Embedder, Embedding};

pub const MAGIC: &[u8; 8] = b"CEGIDX1\0";
pub const HEADER_LEN: usize = 16;
pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Rows per scan partition. Below one partition the scan stays on the calling thread.
const PARTITION_ROWS: usize = 8192;
const EMBED_BATCH: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("index integrity violation: {0}")]
    Integrity(String),
    #[error("malformed index file: {0}")]
    Format(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: u64,
    pub score: f64,
}

impl ScoredDoc {
    /// Retrieval order: score descending, then doc id ascending.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then(self.doc_id.cmp(&other.doc_id))
    }
}

// Greater means ranked earlier.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked(ScoredDoc);

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0).reverse()
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSet {
    pub claim_ref: usize,
    pub docs: Vec<ScoredDoc>,
    pub k_requested: usize,
    pub threshold: f64,
}

impl RetrievalSet {
    pub fn doc_ids(&self) -> Vec<u64> {
        self.docs.iter().map(|d| d.doc_id).collect()
    }
}

/// Keeps the first document, then drops every later one scoring below `threshold`.
pub fn apply_threshold(ranked: Vec<ScoredDoc>, threshold: f64) -> Vec<ScoredDoc> {
    ranked.into_iter().enumerate().filter(|(i, d)| *i == 0 || d.score >= threshold).map(|(_, d)| d).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    data: Vec<f32>,
    norms: Vec<f32>,
}

impl VectorIndex {
    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self, RetrievalError> {
        if dim == 0 {
            return Err(RetrievalError::InvalidInput("dim must be > 0".into()));
        }
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(RetrievalError::Integrity(format!("row {i} has dim {}, expected {dim}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(dim, data)
    }

    fn from_flat(dim: usize, data: Vec<f32>) -> Result<Self, RetrievalError> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(RetrievalError::Integrity(format!("non-finite value in row {}", pos / dim)));
        }
        let norms = data.chunks_exact(dim).map(norm).collect();
        Ok(VectorIndex { dim, data, norms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn row(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    /// Top-`k` rows by cosine similarity to `query`, before thresholding.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<ScoredDoc>, RetrievalError> {
        if self.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if k == 0 {
            return Err(RetrievalError::InvalidInput("k must be >= 1".into()));
        }
        if query.dim() != self.dim {
            return Err(EmbedError::DimMismatch { expected: self.dim, actual: query.dim() }.into());
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(RetrievalError::InvalidInput("query embedding is the zero vector".into()));
        }
        let q = query.values();

        let mut ranked = if self.len() <= PARTITION_ROWS {
            self.scan_partition(q, qn, 0, self.len(), k)
        } else {
            let starts: Vec<usize> = (0..self.len()).step_by(PARTITION_ROWS).collect();
            let partials: Vec<Vec<ScoredDoc>> = starts
                .par_iter()
                .map(|&s| self.scan_partition(q, qn, s, (s + PARTITION_ROWS).min(self.len()), k))
                .collect();
            let mut merged: Vec<ScoredDoc> = partials.into_iter().flatten().collect();
            merged.sort_by(ScoredDoc::rank_cmp);
            merged.truncate(k);
            merged
        };
        ranked.sort_by(ScoredDoc::rank_cmp);
        Ok(ranked)
    }

    fn scan_partition(&self, q: &[f32], qn: f32, start: usize, end: usize, k: usize) -> Vec<ScoredDoc> {
        let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for id in start..end {
            let rn = self.norms[id];
            // A zero row has no direction; it is never a match.
            if rn == 0.0 {
                continue;
            }
            let cand = Ranked(ScoredDoc { doc_id: id as u64, score: cosine_from_parts(dot(q, self.row(id)), qn, rn) });
            if heap.len() < k {
                heap.push(Reverse(cand));
            } else if let Some(Reverse(worst)) = heap.peek() {
                if cand > *worst {
                    heap.pop();
                    heap.push(Reverse(cand));
                }
            }
        }
        heap.into_iter().map(|Reverse(r)| r.0).collect()
    }

    /// Exact retrieval: top-`k` by cosine, then every document after the first
    /// must score at least `threshold`.
    pub fn search(&self, query: &Embedding, k: usize, threshold: f64) -> Result<Vec<ScoredDoc>, RetrievalError> {
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(RetrievalError::InvalidInput(format!("threshold {threshold} outside [-1, 1]")));
        }
        Ok(apply_threshold(self.top_k(query, k)?, threshold))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RetrievalError> {
        let dim = u32::try_from(self.dim).map_err(|_| RetrievalError::Format("dim exceeds u32".into()))?;
        let count = u32::try_from(self.len()).map_err(|_| RetrievalError::Format("count exceeds u32".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&dim.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RetrievalError> {
        if bytes.len() < HEADER_LEN {
            return Err(RetrievalError::Format(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(RetrievalError::Format("bad magic".into()));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(RetrievalError::Format("dim is 0".into()));
        }
        let expected = HEADER_LEN + count * dim * 4;
        if bytes.len() != expected {
            return Err(RetrievalError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_flat(dim, data)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let io = |source| RetrievalError::Io { path: path.to_path_buf(), source };
        std::fs::write(path, self.to_bytes()?).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bytes = std::fs::read(path).map_err(|source| RetrievalError::Io { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }

    /// Reads only the `(dim, count)` header of an index file.
    pub fn peek_header(path: &Path) -> Result<(usize, usize), RetrievalError> {
        use std::io::Read;
        let io = |source| RetrievalError::Io { path: path.to_path_buf(), source };
        let mut header = [0u8; HEADER_LEN];
        std::fs::File::open(path).and_then(|mut f| f.read_exact(&mut header)).map_err(io)?;
        if &header[..8] != MAGIC {
            return Err(RetrievalError::Format("bad magic".into()));
        }
        Ok((
            u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize,
            u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize,
        ))
    }
}

/// Embeds every chunk of `store`; row i is chunk i.
pub fn build_index(store: &DocStore, embedder: &dyn Embedder) -> Result<VectorIndex, RetrievalError> {
    if store.is_empty() {
        return Err(RetrievalError::InvalidInput("cannot index an empty corpus".into()));
    }
    let dim = embedder.dim();
    let mut data = Vec::with_capacity(dim * store.len());
    for batch in store.chunks().chunks(EMBED_BATCH) {
        let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        if vectors.len() != batch.len() {
            return Err(RetrievalError::Integrity(format!(
                "embedder returned {} vectors for {} texts",
                vectors.len(),
                batch.len()
            )));
        }
        for (chunk, v) in batch.iter().zip(vectors) {
            if v.dim() != dim {
                return Err(RetrievalError::Integrity(format!(
                    "chunk {} embedded with dim {}, index dim is {dim}",
                    chunk.id,
                    v.dim()
                )));
            }
            data.extend(v.into_values());
        }
    }
    VectorIndex::from_flat(dim, data)
}

/// Index plus the embedder used to encode queries.
#[derive(Clone)]
pub struct Retriever {
    index: Arc<VectorIndex>,
    embedder: Arc<dyn Embedder>,
}

impl Retriever {
    pub fn new(index: Arc<VectorIndex>, embedder: Arc<dyn Embedder>) -> Result<Self, RetrievalError> {
        if index.dim() != embedder.dim() {
            return Err(EmbedError::DimMismatch { expected: index.dim(), actual: embedder.dim() }.into());
        }
        Ok(Retriever { index, embedder })
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn retrieve(&self, claim_ref: usize, text: &str, k: usize, threshold: f64) -> Result<RetrievalSet, RetrievalError> {
        if self.index.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let query = self.embedder.embed(text)?;
        let docs = self.index.search(&query, k, threshold)?;
        Ok(RetrievalSet { claim_ref, docs, k_requested: k, threshold })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Index whose rows are unit vectors at the given angles from the x axis;
    // querying along x makes each row's score its cosine.
    fn index_with_scores(scores: &[f64]) -> VectorIndex {
        let rows: Vec<Vec<f32>> =
            scores.iter().map(|&s| vec![s as f32, (1.0 - s * s).max(0.0).sqrt() as f32]).collect();
        VectorIndex::from_rows(2, &rows).unwrap()
    }

    fn query_x() -> Embedding {
        Embedding::new(vec![1.0, 0.0]).unwrap()
    }

    fn ids(docs: &[ScoredDoc]) -> Vec<u64> {
        docs.iter().map(|d| d.doc_id).collect()
    }

    #[test]
    fn threshold_filters_after_top_k() {
        let idx = index_with_scores(&[0.9, 0.6, 0.4, 0.3]);
        assert_eq!(ids(&idx.search(&query_x(), 3, 0.5).unwrap()), [0, 1]);
    }

    #[test]
    fn top_one_is_exempt_from_threshold() {
        let idx = index_with_scores(&[0.3, 0.2]);
        assert_eq!(ids(&idx.search(&query_x(), 2, 0.5).unwrap()), [0]);
        assert_eq!(ids(&idx.search(&query_x(), 1, 1.0).unwrap()), [0]);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![1.0, 0.0]];
        let idx = VectorIndex::from_rows(2, &rows).unwrap();
        assert_eq!(ids(&idx.search(&query_x(), 3, -1.0).unwrap()), [1, 2, 3]);
    }

    #[test]
    fn errors() {
        let empty = VectorIndex::from_rows(2, &[]).unwrap();
        assert!(matches!(empty.search(&query_x(), 1, 0.5), Err(RetrievalError::EmptyIndex)));
        let idx = index_with_scores(&[0.5]);
        assert!(matches!(idx.search(&query_x(), 0, 0.5), Err(RetrievalError::InvalidInput(_))));
        assert!(matches!(idx.search(&query_x(), 1, 1.5), Err(RetrievalError::InvalidInput(_))));
        let q3 = Embedding::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(idx.search(&q3, 1, 0.5), Err(RetrievalError::Embed(EmbedError::DimMismatch { .. }))));
    }

    #[test]
    fn bytes_round_trip() {
        let idx = VectorIndex::from_rows(3, &[vec![1.0, -2.5, 0.0], vec![0.125, 3.0, 9.0]]).unwrap();
        let bytes = idx.to_bytes().unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 3 * 4);
        assert_eq!(VectorIndex::from_bytes(&bytes).unwrap(), idx);
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let idx = VectorIndex::from_rows(2, &[vec![1.0, 0.0]]).unwrap();
        let mut bytes = idx.to_bytes().unwrap();
        assert!(VectorIndex::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(VectorIndex::from_bytes(&bytes), Err(RetrievalError::Format(_))));
    }

    #[test]
    fn partitioned_scan_matches_single_partition() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = PARTITION_ROWS * 2 + 17;
        let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-2i32..=2) as f32).collect()).collect();
        let idx = VectorIndex::from_rows(4, &rows).unwrap();
        let q = Embedding::new(vec![1.0, 1.0, 0.0, -1.0]).unwrap();
        let fast = idx.top_k(&q, 9).unwrap();
        let mut all = idx.scan_partition(q.values(), q.norm(), 0, n, n);
        all.sort_by(ScoredDoc::rank_cmp);
        all.truncate(9);
        assert_eq!(fast, all);
    }
}
