//! Builds a retrieval benchmark by rewriting sampled chunks into claims.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dataset::RetrEvalRecord;
use crate::corpus::DocStore;
use crate::llm::{Bindings, Gateway, GenerationRequest, REWRITE_PASSAGE};
use crate::pipeline::PipelineError;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RewriteOutcome {
    pub records: Vec<RetrEvalRecord>,
    /// Sampled chunk ids, ascending.
    pub sampled: Vec<u64>,
    pub failed: Vec<u64>,
}

/// Sorted, seeded sample of `n` distinct ids out of `0..len`.
pub fn sample_ids(len: usize, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u64> = rand::seq::index::sample(&mut rng, len, n).into_iter().map(|i| i as u64).collect();
    ids.sort_unstable();
    ids
}

/// Rewrites `sample_n` sampled chunks. A failed generation skips its record.
pub fn build_rewrite_dataset(
    store: &DocStore,
    sample_n: usize,
    gateway: &Gateway,
    seed: u64,
) -> Result<RewriteOutcome, PipelineError> {
    if sample_n > store.len() {
        return Err(PipelineError::InvalidConfig(format!(
            "cannot sample {sample_n} chunks from a corpus of {}",
            store.len()
        )));
    }
    let sampled = sample_ids(store.len(), sample_n, seed);
    let mut out = RewriteOutcome { sampled: sampled.clone(), ..Default::default() };
    for id in sampled {
        let chunk = store.get_chunk(id)?;
        let bindings: Bindings = [("passage".to_string(), chunk.text.clone())].into();
        match gateway.generate(&GenerationRequest::template(REWRITE_PASSAGE, bindings)) {
            Ok(g) if !g.text.trim().is_empty() => {
                out.records.push(RetrEvalRecord { claim: g.text.trim().to_string(), original_doc_id: id })
            }
            Ok(_) => {
                tracing::warn!(doc_id = id, "empty rewrite, skipping");
                out.failed.push(id);
            }
            Err(e) => {
                tracing::warn!(doc_id = id, error = %e, "rewrite failed, skipping");
                out.failed.push(id);
            }
        }
    }
    Ok(out)
}
