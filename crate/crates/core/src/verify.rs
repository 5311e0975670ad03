//! Claim verification and citation attachment.
//!
//! An [`NliMethod`] relates a claim to retrieved evidence. [`verify_claim`]
//! collapses that relation to the two claim labels: only `Supports` yields
//! `Factual`, while `Neutral` and `Contradicts` both yield `Nonfactual`.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::DocStore;
use crate::llm::{numbered_block, Bindings, Gateway, GatewayError, GenerationRequest, NLI_PREMISE_HYPOTHESIS, NLI_WITH_DOCS};
use crate::segment::{char_to_byte, Claim};
use crate::text::tokens;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("unparseable verdict: {0:?}")]
    Unparseable(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(alias = "factual", alias = "FACTUAL")]
    Factual,
    #[serde(alias = "nonfactual", alias = "NONFACTUAL")]
    Nonfactual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NliRelation {
    Supports,
    Contradicts,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliOutcome {
    pub relation: NliRelation,
    pub confidence: Option<f64>,
    pub raw: String,
    /// Leading docs the method actually saw, when fewer than offered.
    pub docs_used: Option<usize>,
}

impl NliOutcome {
    pub fn new(relation: NliRelation, raw: impl Into<String>) -> Self {
        NliOutcome { relation, confidence: None, raw: raw.into(), docs_used: None }
    }
}

/// A retrieved document resolved to its text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDoc {
    pub doc_id: u64,
    pub score: f64,
    pub source_title: String,
    pub text: String,
}

pub trait NliMethod: Send + Sync {
    fn judge(&self, question: &str, claim: &Claim, docs: &[EvidenceDoc]) -> Result<NliOutcome, VerifyError>;

    fn id(&self) -> String;
}

/// Reads a two-way label from free-form model output.
///
/// `nonfactual` is searched first since it contains `factual`.
pub fn parse_label(raw: &str) -> Result<Label, VerifyError> {
    let lower = raw.to_lowercase();
    if lower.contains("nonfactual") {
        Ok(Label::Nonfactual)
    } else if lower.contains("factual") {
        Ok(Label::Factual)
    } else {
        Err(VerifyError::Unparseable(raw.to_string()))
    }
}

/// Reads a three-way NLI relation; the earliest of `entailment`, `contradiction`, `neutral` wins.
pub fn parse_relation(raw: &str) -> Result<NliRelation, VerifyError> {
    let lower = raw.to_lowercase();
    [("entailment", NliRelation::Supports), ("contradiction", NliRelation::Contradicts), ("neutral", NliRelation::Neutral)]
        .into_iter()
        .filter_map(|(word, rel)| lower.find(word).map(|pos| (pos, rel)))
        .min_by_key(|&(pos, _)| pos)
        .map(|(_, rel)| rel)
        .ok_or_else(|| VerifyError::Unparseable(raw.to_string()))
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "of", "at", "by", "for", "with", "about", "to", "from", "in", "on",
    "into", "over", "under", "as", "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had",
    "do", "does", "did", "it", "its", "this", "that", "these", "those", "he", "she", "they", "them", "his", "her",
    "their", "we", "our", "you", "your", "i", "me", "my", "so", "than", "then", "there", "also", "which", "who",
    "whom", "what", "when", "where", "while", "can", "could", "will", "would", "should", "may", "might", "very",
    "such", "not", "no",
];

/// Deterministic word-containment oracle for tests and offline runs.
///
/// `Contradicts` when a configured trigger pair fires (claim has the first word,
/// evidence the second); otherwise `Supports` when every content word of the claim
/// occurs in the evidence; otherwise `Neutral`.
#[derive(Debug, Clone)]
pub struct LexicalNli {
    stopwords: HashSet<String>,
    triggers: Vec<(String, String)>,
}

impl Default for LexicalNli {
    fn default() -> Self {
        LexicalNli { stopwords: STOPWORDS.iter().map(|s| s.to_string()).collect(), triggers: Vec::new() }
    }
}

impl LexicalNli {
    pub fn with_trigger(mut self, claim_word: &str, evidence_word: &str) -> Self {
        self.triggers.push((claim_word.to_lowercase(), evidence_word.to_lowercase()));
        self
    }

    /// Registers an antonym pair in both directions.
    pub fn with_antonyms(self, a: &str, b: &str) -> Self {
        self.with_trigger(a, b).with_trigger(b, a)
    }

    pub fn content_words(&self, text: &str) -> Vec<String> {
        tokens(text).into_iter().filter(|t| !self.stopwords.contains(t)).collect()
    }

    pub fn relate(&self, claim: &str, evidence: &str) -> NliRelation {
        let claim_tokens: HashSet<String> = tokens(claim).into_iter().collect();
        let evidence_tokens: HashSet<String> = tokens(evidence).into_iter().collect();
        if self.triggers.iter().any(|(c, e)| claim_tokens.contains(c) && evidence_tokens.contains(e)) {
            return NliRelation::Contradicts;
        }
        if self.content_words(claim).iter().all(|w| evidence_tokens.contains(w)) {
            NliRelation::Supports
        } else {
            NliRelation::Neutral
        }
    }
}

impl NliMethod for LexicalNli {
    fn judge(&self, _question: &str, claim: &Claim, docs: &[EvidenceDoc]) -> Result<NliOutcome, VerifyError> {
        let evidence = docs.iter().map(|d| d.text.as_str()).collect::<Vec<_>>().join("\n");
        let relation = self.relate(&claim.text, &evidence);
        Ok(NliOutcome::new(relation, format!("lexical: {relation:?}")))
    }

    fn id(&self) -> String {
        "lexical".into()
    }
}

/// LLM judge using the two-way `nli_with_docs` prompt; `Factual` maps to
/// `Supports` and `Nonfactual` to `Contradicts`.
pub struct LlmNli {
    gateway: Arc<Gateway>,
    template: String,
    temperature: f64,
    max_attempts: u32,
}

impl LlmNli {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        LlmNli { gateway, template: NLI_WITH_DOCS.into(), temperature: 0.0, max_attempts: 3 }
    }

    pub fn with_template(mut self, template: &str) -> Self {
        self.template = template.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Self {
        self.max_attempts = max_attempts;
        self
    }
}

impl NliMethod for LlmNli {
    fn judge(&self, question: &str, claim: &Claim, docs: &[EvidenceDoc]) -> Result<NliOutcome, VerifyError> {
        let bindings: Bindings =
            [("question".to_string(), question.to_string()), ("segment".to_string(), claim.text.clone())].into();
        let request = GenerationRequest::template(&self.template, bindings)
            .with_docs(docs.iter().map(|d| d.text.clone()).collect())
            .with_temperature(self.temperature)
            .with_max_attempts(self.max_attempts);
        let result = self.gateway.generate(&request)?;
        let relation = match parse_label(&result.text)? {
            Label::Factual => NliRelation::Supports,
            Label::Nonfactual => NliRelation::Contradicts,
        };
        Ok(NliOutcome {
            relation,
            confidence: None,
            raw: result.text,
            docs_used: result.truncated.then_some(result.docs_used),
        })
    }

    fn id(&self) -> String {
        format!("llm:{}", self.template)
    }
}

/// LLM judge using the three-way premise/hypothesis prompt.
pub struct PremiseHypothesisNli {
    gateway: Arc<Gateway>,
    temperature: f64,
}

impl PremiseHypothesisNli {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        PremiseHypothesisNli { gateway, temperature: 0.0 }
    }
}

impl NliMethod for PremiseHypothesisNli {
    fn judge(&self, _question: &str, claim: &Claim, docs: &[EvidenceDoc]) -> Result<NliOutcome, VerifyError> {
        let premise = docs.iter().map(|d| d.text.as_str()).collect::<Vec<_>>().join("\n");
        let bindings: Bindings = [("premise".to_string(), premise), ("hypothesis".to_string(), claim.text.clone())].into();
        let request = GenerationRequest::template(NLI_PREMISE_HYPOTHESIS, bindings).with_temperature(self.temperature);
        let result = self.gateway.generate(&request)?;
        Ok(NliOutcome::new(parse_relation(&result.text)?, result.text))
    }

    fn id(&self) -> String {
        "llm:premise-hypothesis".into()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyMode {
    /// One judgment over the numbered block of all retrieved docs.
    #[default]
    Concatenated,
    /// One judgment per retrieved doc.
    PerDoc,
}

impl std::str::FromStr for VerifyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "concatenated" | "concat" => Ok(VerifyMode::Concatenated),
            "per-doc" | "perdoc" | "per_doc" => Ok(VerifyMode::PerDoc),
            other => Err(format!("unknown verifier mode `{other}` (expected concatenated or per-doc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocOutcome {
    pub doc_id: u64,
    pub relation: NliRelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub cited_doc_ids: Vec<u64>,
    pub rationale: String,
    pub raw_output: String,
    /// Per-document relations; filled in per-doc mode only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub doc_outcomes: Vec<DocOutcome>,
}

impl Verdict {
    fn nonfactual(rationale: impl Into<String>, raw_output: String, doc_outcomes: Vec<DocOutcome>) -> Self {
        Verdict { label: Label::Nonfactual, cited_doc_ids: Vec::new(), rationale: rationale.into(), raw_output, doc_outcomes }
    }

    /// Fraction of judged docs that support the claim, when per-doc outcomes exist.
    pub fn support_fraction(&self) -> Option<f64> {
        if self.doc_outcomes.is_empty() {
            return None;
        }
        let supports = self.doc_outcomes.iter().filter(|o| o.relation == NliRelation::Supports).count();
        Some(supports as f64 / self.doc_outcomes.len() as f64)
    }
}

pub const NO_EVIDENCE: &str = "no evidence retrieved";

pub fn verify_claim(
    question: &str,
    claim: &Claim,
    evidence: &[EvidenceDoc],
    nli: &dyn NliMethod,
    mode: VerifyMode,
) -> Result<Verdict, VerifyError> {
    if claim.text.trim().is_empty() {
        return Err(VerifyError::InvalidInput("claim text is empty".into()));
    }
    if evidence.is_empty() {
        return Ok(Verdict::nonfactual(NO_EVIDENCE, String::new(), Vec::new()));
    }
    match mode {
        VerifyMode::Concatenated => {
            let outcome = nli.judge(question, claim, evidence)?;
            let seen = outcome.docs_used.unwrap_or(evidence.len()).min(evidence.len());
            if outcome.relation == NliRelation::Supports && seen > 0 {
                Ok(Verdict {
                    label: Label::Factual,
                    cited_doc_ids: evidence[..seen].iter().map(|d| d.doc_id).collect(),
                    rationale: outcome.raw.trim().to_string(),
                    raw_output: outcome.raw,
                    doc_outcomes: Vec::new(),
                })
            } else if seen == 0 {
                Ok(Verdict::nonfactual("no evidence fit in the prompt budget", outcome.raw, Vec::new()))
            } else {
                Ok(Verdict::nonfactual(outcome.raw.trim().to_string(), outcome.raw, Vec::new()))
            }
        }
        VerifyMode::PerDoc => {
            let mut outcomes = Vec::with_capacity(evidence.len());
            let mut raws = Vec::with_capacity(evidence.len());
            for doc in evidence {
                let outcome = nli.judge(question, claim, std::slice::from_ref(doc))?;
                outcomes.push(DocOutcome { doc_id: doc.doc_id, relation: outcome.relation });
                raws.push(format!("[doc {}] {}", doc.doc_id, outcome.raw.trim()));
            }
            let raw = raws.join("\n");
            if let Some(c) = outcomes.iter().find(|o| o.relation == NliRelation::Contradicts) {
                let why = format!("doc {} contradicts the claim", c.doc_id);
                return Ok(Verdict::nonfactual(why, raw, outcomes));
            }
            let supporting: Vec<u64> =
                outcomes.iter().filter(|o| o.relation == NliRelation::Supports).map(|o| o.doc_id).collect();
            if supporting.is_empty() {
                return Ok(Verdict::nonfactual("no retrieved doc supports the claim", raw, outcomes));
            }
            Ok(Verdict {
                label: Label::Factual,
                rationale: format!("supported by {} of {} retrieved docs", supporting.len(), outcomes.len()),
                cited_doc_ids: supporting,
                raw_output: raw,
                doc_outcomes: outcomes,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub marker: usize,
    pub doc_id: u64,
    pub source_title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateOptions {
    pub warn_open: String,
    pub warn_close: String,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions { warn_open: "<nonfactual>".into(), warn_close: "</nonfactual>".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedText {
    pub text: String,
    pub references: Vec<Reference>,
}

/// Looks up the title shown in a reference entry.
pub trait TitleLookup {
    fn title_of(&self, doc_id: u64) -> String;
}

impl TitleLookup for DocStore {
    fn title_of(&self, doc_id: u64) -> String {
        self.get_chunk(doc_id).map(|c| c.source_title.clone()).unwrap_or_default()
    }
}

impl TitleLookup for BTreeMap<u64, String> {
    fn title_of(&self, doc_id: u64) -> String {
        self.get(&doc_id).cloned().unwrap_or_default()
    }
}

/// Adds `[n]` markers after factual claims, wraps nonfactual claims in warning
/// markers and appends a `[n] title (doc id)` reference list.
///
/// Markers are numbered by first citation. Claims must be in span order.
pub fn annotate_response(
    response: &str,
    claims: &[(&Claim, &Verdict)],
    titles: &dyn TitleLookup,
    options: &AnnotateOptions,
) -> AnnotatedText {
    let mut out = String::with_capacity(response.len() + 64);
    let mut references: Vec<Reference> = Vec::new();
    let mut cursor = 0;
    for (claim, verdict) in claims {
        let start = char_to_byte(response, claim.span_start);
        let end = char_to_byte(response, claim.span_end);
        out.push_str(&response[cursor..start]);
        let body = &response[start..end];
        match verdict.label {
            Label::Nonfactual => {
                out.push_str(&options.warn_open);
                out.push_str(body);
                out.push_str(&options.warn_close);
            }
            Label::Factual => {
                out.push_str(body);
                for &doc_id in &verdict.cited_doc_ids {
                    let marker = match references.iter().find(|r| r.doc_id == doc_id) {
                        Some(r) => r.marker,
                        None => {
                            let marker = references.len() + 1;
                            references.push(Reference { marker, doc_id, source_title: titles.title_of(doc_id) });
                            marker
                        }
                    };
                    out.push_str(&format!("[{marker}]"));
                }
            }
        }
        cursor = end;
    }
    out.push_str(&response[cursor..]);
    if !references.is_empty() {
        out.push_str("\n\n");
        let lines: Vec<String> =
            references.iter().map(|r| format!("[{}] {} ({})", r.marker, r.source_title, r.doc_id)).collect();
        out.push_str(&lines.join("\n"));
    }
    AnnotatedText { text: out, references }
}

/// Numbered docs block as the concatenated-mode prompt shows it.
pub fn docs_block(evidence: &[EvidenceDoc]) -> String {
    numbered_block(&evidence.iter().map(|d| d.text.as_str()).collect::<Vec<_>>())
}
