#![allow(dead_code)]

use std::sync::Arc;

use ceg_core::embed::{EmbedError, Embedder, Embedding};
use ceg_core::index::ScoredDoc;
use ceg_core::VectorIndex;

/// Parses a query text of whitespace-separated floats into its vector.
pub struct LiteralEmbedder(pub usize);

impl Embedder for LiteralEmbedder {
    fn dim(&self) -> usize {
        self.0
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let v: Vec<f32> = text.split_whitespace().map(|t| t.parse().map_err(|_| EmbedError::InvalidInput(t.into()))).collect::<Result<_, _>>()?;
        Embedding::new(v)
    }

    fn id(&self) -> String {
        "literal".into()
    }
}

pub fn literal(v: &[f32]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

/// Reference retrieval: score every non-zero row, fully sort by score desc then
/// id asc, keep `k`, then keep the first plus any row scoring >= `t`.
pub fn oracle_retrieve(rows: &[Vec<f32>], query: &[f32], k: usize, t: f64) -> Vec<ScoredDoc> {
    let q = Embedding::new(query.to_vec()).unwrap();
    let mut all: Vec<ScoredDoc> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&x| x != 0.0))
        .map(|(i, r)| ScoredDoc {
            doc_id: i as u64,
            score: ceg_core::cosine_sim(&q, &Embedding::new(r.clone()).unwrap()).unwrap(),
        })
        .collect();
    all.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.doc_id.cmp(&b.doc_id)));
    all.truncate(k);
    let mut out = Vec::new();
    for (i, d) in all.into_iter().enumerate() {
        if i == 0 || d.score >= t {
            out.push(d);
        }
    }
    out
}

pub fn index_arc(dim: usize, rows: &[Vec<f32>]) -> Arc<VectorIndex> {
    Arc::new(VectorIndex::from_rows(dim, rows).unwrap())
}

use std::sync::atomic::{AtomicUsize, Ordering};

use ceg_core::llm::{Backend, BackendCall, BackendError, Gateway};
use ceg_core::verify::{EvidenceDoc, NliOutcome, VerifyError};
use ceg_core::{build_index, Ceg, Claim, DocStore, HashingEmbedder, NliMethod, NliRelation, PipelineConfig, Retriever};

pub const DIM: usize = 256;

pub fn store_of(articles: &[(&str, &str)]) -> DocStore {
    let mut store = DocStore::in_memory(100, "test");
    for (title, body) in articles {
        store.ingest(body, title).unwrap();
    }
    store
}

pub fn ceg(store: DocStore, nli: Arc<dyn NliMethod>, backend: Arc<dyn Backend>, config: PipelineConfig) -> Ceg {
    let embedder = HashingEmbedder::new(DIM).unwrap();
    let index = build_index(&store, &embedder).unwrap();
    let retriever = Retriever::new(Arc::new(index), Arc::new(embedder)).unwrap();
    let gateway = Gateway::new(backend).with_backoff(std::time::Duration::ZERO);
    Ceg::new(Arc::new(store), retriever, nli, Arc::new(gateway), config).unwrap()
}

/// Contradicts for the first `r` judgements, then Supports.
pub struct CountdownNli {
    pub remaining: AtomicUsize,
}

impl CountdownNli {
    pub fn new(r: usize) -> Self {
        CountdownNli { remaining: AtomicUsize::new(r) }
    }
}

impl NliMethod for CountdownNli {
    fn judge(&self, _q: &str, _c: &Claim, _d: &[EvidenceDoc]) -> Result<NliOutcome, VerifyError> {
        let before = self.remaining.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1));
        let rel = if before.is_ok() { NliRelation::Contradicts } else { NliRelation::Supports };
        Ok(NliOutcome::new(rel, format!("{rel:?}")))
    }

    fn id(&self) -> String {
        "countdown".into()
    }
}

/// Replies with the `passage` binding, or the whole prompt.
pub struct EchoBackend;

impl Backend for EchoBackend {
    fn id(&self) -> String {
        "echo".into()
    }

    fn complete(&self, call: &BackendCall<'_>) -> Result<String, BackendError> {
        Ok(call.bindings.get("passage").cloned().unwrap_or_else(|| call.prompt.to_string()))
    }
}
