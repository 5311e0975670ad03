//! Post-hoc citation and fact checking for generated text.
//!
//! A response is split into claims ([`segment`]), each claim retrieves evidence
//! from a chunked corpus ([`corpus`], [`embed`], [`index`]), an NLI judge labels
//! it ([`verify`]), and [`pipeline`] re-prompts the generator ([`llm`]) while
//! nonfactual claims remain. [`eval`] holds the benchmark metrics.

pub mod corpus;
pub mod embed;
pub mod eval;
pub mod index;
pub mod llm;
pub mod pipeline;
pub mod segment;
pub mod text;
pub mod verify;

pub use corpus::{chunk_source, CorpusError, CorpusManifest, DocChunk, DocStore};
pub use embed::{cosine_sim, EmbedError, Embedder, Embedding, HashingEmbedder, HttpEmbedder};
pub use index::{build_index, RetrievalError, RetrievalSet, Retriever, ScoredDoc, VectorIndex};
pub use pipeline::{AnnotatedResponse, Ceg, PipelineConfig, PipelineError, RoundRecord, RunStatus, VerdictedClaim};
pub use segment::{Claim, Segmenter};
pub use verify::{verify_claim, Label, LexicalNli, LlmNli, NliMethod, NliRelation, Verdict, VerifyMode};
