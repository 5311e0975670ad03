//! End-to-end orchestration: segment → retrieve → verify → annotate, with a
//! bounded regeneration loop for responses that contain nonfactual claims.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, DocStore, DEFAULT_CHUNK_BUDGET};
use crate::index::{RetrievalError, RetrievalSet, Retriever, ScoredDoc, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use crate::llm::{numbered_block, Bindings, Gateway, GatewayError, GenerationRequest, TemplateError, REGENERATE_OPEN};
use crate::segment::{Claim, Segmenter};
use crate::verify::{
    annotate_response, verify_claim, AnnotateOptions, AnnotatedText, EvidenceDoc, Label, NliMethod, Reference, Verdict,
    VerifyError, VerifyMode,
};

pub const DEFAULT_MAX_REGEN: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl PipelineError {
    /// Failures of the generation backend itself, as opposed to bad input or config.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            PipelineError::Gateway(GatewayError::Transport { .. } | GatewayError::Backend { .. })
                | PipelineError::Verify(VerifyError::Gateway(GatewayError::Transport { .. } | GatewayError::Backend { .. }))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub threshold: f64,
    /// Maximum regeneration attempts; 0 means detection and annotation only.
    pub max_regen: u32,
    pub mode: VerifyMode,
    pub temperature: f64,
    pub chunk_budget: usize,
    pub regen_template: String,
    /// Transport attempts per generation call.
    pub generation_attempts: u32,
    /// Concurrent claim verifications within a round.
    pub jobs: usize,
    pub annotate: AnnotateOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: DEFAULT_TOP_K,
            threshold: DEFAULT_THRESHOLD,
            max_regen: DEFAULT_MAX_REGEN,
            mode: VerifyMode::Concatenated,
            temperature: 0.0,
            chunk_budget: DEFAULT_CHUNK_BUDGET,
            regen_template: REGENERATE_OPEN.into(),
            generation_attempts: 3,
            jobs: 1,
            annotate: AnnotateOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [-1, 1]", self.threshold));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad(format!("temperature {} must be >= 0", self.temperature));
        }
        if self.chunk_budget == 0 {
            return bad("chunk_budget must be >= 1".into());
        }
        Ok(())
    }
}

/// A claim together with its evidence and verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictedClaim {
    pub claim: Claim,
    pub retrieval: RetrievalSet,
    pub evidence: Vec<EvidenceDoc>,
    pub verdict: Verdict,
}

#[derive(Serialize)]
struct ClaimView<'a> {
    index: usize,
    text: &'a str,
    span: [usize; 2],
    label: Label,
    citations: &'a [u64],
    rationale: &'a str,
    retrieved: &'a [ScoredDoc],
}

impl Serialize for VerdictedClaim {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ClaimView {
            index: self.claim.index,
            text: &self.claim.text,
            span: [self.claim.span_start, self.claim.span_end],
            label: self.verdict.label,
            citations: &self.verdict.cited_doc_ids,
            rationale: &self.verdict.rationale,
            retrieved: &self.retrieval.docs,
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub response: String,
    /// The part of `response` that was segmented, when not the whole response.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checked_text: Option<String>,
    /// Prompt that produced `response`; `None` for a caller-supplied response.
    pub prompt: Option<String>,
    pub claims: Vec<VerdictedClaim>,
    pub annotated_text: String,
    pub references: Vec<Reference>,
}

impl RoundRecord {
    pub fn all_factual(&self) -> bool {
        self.claims.iter().all(|c| c.verdict.label == Label::Factual)
    }

    pub fn nonfactual(&self) -> Vec<&VerdictedClaim> {
        self.claims.iter().filter(|c| c.verdict.label == Label::Nonfactual).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    CleanFirstPass,
    CleanAfterRegen,
    ExhaustedAttempts,
    TransportFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedResponse {
    pub question: String,
    pub final_text: String,
    pub rounds: Vec<RoundRecord>,
    pub status: RunStatus,
    pub error: Option<String>,
}

impl AnnotatedResponse {
    /// Regeneration calls made (the initial answer, if generated, is not counted).
    pub fn regenerations(&self) -> usize {
        self.rounds.len().saturating_sub(1)
    }

    pub fn has_nonfactual(&self) -> bool {
        self.rounds.last().is_some_and(|r| !r.all_factual())
    }
}

impl Serialize for AnnotatedResponse {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            question: &'a str,
            response: &'a str,
            annotated_text: &'a str,
            claims: &'a [VerdictedClaim],
            references: &'a [Reference],
            status: RunStatus,
            #[serde(skip_serializing_if = "Option::is_none")]
            error: Option<&'a str>,
            final_text: &'a str,
            rounds: &'a [RoundRecord],
        }
        let last = self.rounds.last();
        View {
            question: &self.question,
            response: &self.final_text,
            annotated_text: last.map_or(self.final_text.as_str(), |r| r.annotated_text.as_str()),
            claims: last.map_or(&[], |r| r.claims.as_slice()),
            references: last.map_or(&[], |r| r.references.as_slice()),
            status: self.status,
            error: self.error.as_deref(),
            final_text: &self.final_text,
            rounds: &self.rounds,
        }
        .serialize(s)
    }
}

/// How one regeneration loop is driven. [`Ceg::run_ceg`] uses the open-ended
/// defaults; the QA judge supplies its own prompts and reasoning extractor.
pub struct RegenTask<'a> {
    pub question: &'a str,
    /// Used when no initial response is given.
    pub initial_request: GenerationRequest,
    pub regen_template: &'a str,
    /// Bound into the regeneration template alongside the standard placeholders.
    pub extra_bindings: Bindings,
    /// Selects the text to fact-check out of a full response.
    pub checked_text: &'a (dyn Fn(&str) -> String + Sync),
}

pub struct Ceg {
    segmenter: Segmenter,
    store: Arc<DocStore>,
    retriever: Retriever,
    nli: Arc<dyn NliMethod>,
    gateway: Arc<Gateway>,
    config: PipelineConfig,
    pool: Option<rayon::ThreadPool>,
}

impl Ceg {
    pub fn new(
        store: Arc<DocStore>,
        retriever: Retriever,
        nli: Arc<dyn NliMethod>,
        gateway: Arc<Gateway>,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if retriever.index().len() != store.len() {
            return Err(PipelineError::InvalidConfig(format!(
                "index holds {} rows but the corpus has {} chunks",
                retriever.index().len(),
                store.len()
            )));
        }
        let pool = if config.jobs > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.jobs)
                    .build()
                    .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Ceg { segmenter: Segmenter::default(), store, retriever, nli, gateway, config, pool })
    }

    pub fn with_segmenter(mut self, segmenter: Segmenter) -> Self {
        self.segmenter = segmenter;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn store(&self) -> &DocStore {
        &self.store
    }

    pub fn retriever(&self) -> &Retriever {
        &self.retriever
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn nli(&self) -> &dyn NliMethod {
        self.nli.as_ref()
    }

    pub fn resolve(&self, retrieval: &RetrievalSet) -> Result<Vec<EvidenceDoc>, PipelineError> {
        retrieval
            .docs
            .iter()
            .map(|d| {
                let chunk = self.store.get_chunk(d.doc_id)?;
                Ok(EvidenceDoc {
                    doc_id: d.doc_id,
                    score: d.score,
                    source_title: chunk.source_title.clone(),
                    text: chunk.text.clone(),
                })
            })
            .collect()
    }

    /// Retrieves evidence for one claim and verifies it.
    pub fn check_claim(&self, question: &str, claim: &Claim) -> Result<VerdictedClaim, PipelineError> {
        let retrieval = self.retriever.retrieve(claim.index, &claim.text, self.config.k, self.config.threshold)?;
        let evidence = self.resolve(&retrieval)?;
        let verdict = verify_claim(question, claim, &evidence, self.nli.as_ref(), self.config.mode)?;
        Ok(VerdictedClaim { claim: claim.clone(), retrieval, evidence, verdict })
    }

    fn check_all(&self, question: &str, claims: &[Claim]) -> Result<Vec<VerdictedClaim>, PipelineError> {
        match &self.pool {
            Some(pool) => {
                use rayon::prelude::*;
                pool.install(|| claims.par_iter().map(|c| self.check_claim(question, c)).collect())
            }
            None => claims.iter().map(|c| self.check_claim(question, c)).collect(),
        }
    }

    /// Detection only: segments `response`, verifies every claim and annotates.
    pub fn run_detection(&self, question: &str, response: &str) -> Result<RoundRecord, PipelineError> {
        self.detect_round(question, response, None, None)
    }

    fn detect_round(
        &self,
        question: &str,
        response: &str,
        checked_text: Option<String>,
        prompt: Option<String>,
    ) -> Result<RoundRecord, PipelineError> {
        let target = checked_text.as_deref().unwrap_or(response);
        let claims = self.segmenter.segment(target);
        let verdicted = self.check_all(question, &claims)?;
        let pairs: Vec<(&Claim, &Verdict)> = verdicted.iter().map(|v| (&v.claim, &v.verdict)).collect();
        let annotated: AnnotatedText = annotate_response(target, &pairs, self.store.as_ref(), &self.config.annotate);
        Ok(RoundRecord {
            response: response.to_string(),
            checked_text,
            prompt,
            claims: verdicted,
            annotated_text: annotated.text,
            references: annotated.references,
        })
    }

    /// Regeneration request: question, prior response, the numbered nonfactual
    /// segments, and the union of their evidence ranked by best score.
    pub fn build_regen_request(
        &self,
        template: &str,
        question: &str,
        response: &str,
        nonfactual: &[&VerdictedClaim],
        extra_bindings: &Bindings,
    ) -> GenerationRequest {
        let mut best: BTreeMap<u64, (f64, &str)> = BTreeMap::new();
        for doc in nonfactual.iter().flat_map(|c| &c.evidence) {
            let entry = best.entry(doc.doc_id).or_insert((doc.score, doc.text.as_str()));
            if doc.score > entry.0 {
                entry.0 = doc.score;
            }
        }
        let mut ranked: Vec<(u64, f64, &str)> = best.into_iter().map(|(id, (s, t))| (id, s, t)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let segments: Vec<&str> = nonfactual.iter().map(|c| c.claim.text.as_str()).collect();
        let mut bindings = extra_bindings.clone();
        bindings.insert("question".into(), question.into());
        bindings.insert("response".into(), response.into());
        bindings.insert("nonfactual_segments".into(), numbered_block(&segments));
        GenerationRequest::template(template, bindings)
            .with_docs(ranked.into_iter().map(|(_, _, t)| t.to_string()).collect())
            .with_temperature(self.config.temperature)
            .with_max_attempts(self.config.generation_attempts)
    }

    pub fn build_regen_prompt(
        &self,
        question: &str,
        response: &str,
        nonfactual: &[&VerdictedClaim],
    ) -> Result<String, PipelineError> {
        let request =
            self.build_regen_request(&self.config.regen_template, question, response, nonfactual, &Bindings::new());
        Ok(self.gateway.render(&request)?.text)
    }

    /// Full loop for an open-ended question. When `initial_response` is `None`
    /// the gateway answers the bare question first.
    pub fn run_ceg(&self, question: &str, initial_response: Option<&str>) -> Result<AnnotatedResponse, PipelineError> {
        let identity = |s: &str| s.to_string();
        let task = RegenTask {
            question,
            initial_request: GenerationRequest::raw(question)
                .with_temperature(self.config.temperature)
                .with_max_attempts(self.config.generation_attempts),
            regen_template: &self.config.regen_template,
            extra_bindings: Bindings::new(),
            checked_text: &identity,
        };
        self.run_task(&task, initial_response)
    }

    pub fn run_task(&self, task: &RegenTask<'_>, initial_response: Option<&str>) -> Result<AnnotatedResponse, PipelineError> {
        let mut out = AnnotatedResponse {
            question: task.question.to_string(),
            final_text: String::new(),
            rounds: Vec::new(),
            status: RunStatus::TransportFailure,
            error: None,
        };
        let transport_stop = |mut out: AnnotatedResponse, err: PipelineError| {
            if err.is_transport() {
                out.status = RunStatus::TransportFailure;
                out.error = Some(err.to_string());
                Ok(out)
            } else {
                Err(err)
            }
        };

        let (mut response, mut prompt) = match initial_response {
            Some(r) => (r.to_string(), None),
            None => match self.gateway.generate(&task.initial_request) {
                Ok(g) => (g.text, Some(g.prompt)),
                Err(e) => return transport_stop(out, e.into()),
            },
        };

        loop {
            out.final_text = response.clone();
            let checked = (task.checked_text)(&response);
            let checked = (checked != response).then_some(checked);
            let round = match self.detect_round(task.question, &response, checked, prompt.take()) {
                Ok(r) => r,
                Err(e) => return transport_stop(out, e),
            };
            let clean = round.all_factual();
            out.rounds.push(round);
            if clean {
                out.status = if out.rounds.len() == 1 { RunStatus::CleanFirstPass } else { RunStatus::CleanAfterRegen };
                return Ok(out);
            }
            if out.regenerations() >= self.config.max_regen as usize {
                out.status = RunStatus::ExhaustedAttempts;
                return Ok(out);
            }
            let last = out.rounds.last().expect("round just pushed");
            let request = self.build_regen_request(
                task.regen_template,
                task.question,
                &last.response,
                &last.nonfactual(),
                &task.extra_bindings,
            );
            match self.gateway.generate(&request) {
                Ok(g) => {
                    response = g.text;
                    prompt = Some(g.prompt);
                }
                Err(e) => return transport_stop(out, e.into()),
            }
        }
    }

    /// Verifies a pre-segmented unit as a single claim (detection benchmarks).
    pub fn check_segment(&self, question: &str, text: &str) -> Result<VerdictedClaim, PipelineError> {
        self.check_claim(question, &Claim::whole(1, text.trim()))
    }
}
