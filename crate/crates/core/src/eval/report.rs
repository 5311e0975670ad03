//! Metric reports and the benchmark drivers that fill them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{LabeledSegment, QaPairRecord, RetrEvalRecord};
use super::metrics::{self, MetricError};
use super::qa::{judge_qa_pair, QaJudgement};
use crate::index::Retriever;
use crate::corpus::DocStore;
use crate::pipeline::{Ceg, PipelineError, VerdictedClaim};
use crate::segment::Claim;
use crate::verify::{EvidenceDoc, Label, NliMethod, NliRelation};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_pr_nonfactual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_pr_factual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_nonfactual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_factual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_at_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub counts: BTreeMap<String, usize>,
    /// Metrics that could not be computed, with the reason.
    pub undefined: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn new(task: &str) -> Self {
        MetricsReport { task: task.to_string(), ..Default::default() }
    }

    fn set(&mut self, name: &str, value: Result<f64, MetricError>) -> Option<f64> {
        match value {
            Ok(v) => Some(v),
            Err(e) => {
                self.undefined.insert(name.to_string(), e.to_string());
                None
            }
        }
    }

    pub fn values(&self) -> Vec<(&'static str, f64)> {
        [
            ("auc_pr_nonfactual", self.auc_pr_nonfactual),
            ("auc_pr_factual", self.auc_pr_factual),
            ("balanced_accuracy", self.balanced_accuracy),
            ("accuracy_nonfactual", self.accuracy_nonfactual),
            ("accuracy_factual", self.accuracy_factual),
            ("accuracy", self.accuracy),
            ("recall_at_k", self.recall_at_k),
            ("precision_at_k", self.precision_at_k),
            ("agreement_rate", self.agreement_rate),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
        .collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut md = format!("# {} report\n\n| metric | value |\n|---|---|\n", self.task);
        for (name, value) in self.values() {
            let _ = writeln!(md, "| {name} | {:.2}% |", value * 100.0);
        }
        if let Some(k) = self.k {
            let _ = writeln!(md, "| k | {k} |");
        }
        if !self.counts.is_empty() {
            md.push_str("\n| count | n |\n|---|---|\n");
            for (name, n) in &self.counts {
                let _ = writeln!(md, "| {name} | {n} |");
            }
        }
        if !self.undefined.is_empty() {
            md.push_str("\nUndefined:\n");
            for (name, why) in &self.undefined {
                let _ = writeln!(md, "- {name}: {why}");
            }
        }
        if self.auc_pr_nonfactual.is_some() || self.auc_pr_factual.is_some() {
            md.push_str("\nAUC-PR uses step interpolation (sum of precision times recall increment), not the trapezoid rule.\n");
        }
        md
    }

    /// Writes `report.json` and `report.md` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(dir.join("report.json"), json + "\n")?;
        std::fs::write(dir.join("report.md"), self.to_markdown())
    }
}

/// Nonfactual score of a verdicted segment: one minus the supported fraction of
/// its docs, or the 0/1 label when no per-doc outcomes exist.
pub fn nonfactual_score(v: &VerdictedClaim) -> f64 {
    match v.verdict.support_fraction() {
        Some(f) => 1.0 - f,
        None => match v.verdict.label {
            Label::Nonfactual => 1.0,
            Label::Factual => 0.0,
        },
    }
}

/// Detection metrics from labels and nonfactual scores (higher = more nonfactual).
pub fn detection_report(predictions: &[Label], scores: &[f64], golds: &[Label]) -> MetricsReport {
    let mut r = MetricsReport::new("detect");
    let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
    r.auc_pr_nonfactual = r.set("auc_pr_nonfactual", metrics::auc_pr(scores, golds, Label::Nonfactual));
    r.auc_pr_factual = r.set("auc_pr_factual", metrics::auc_pr(&negated, golds, Label::Factual));
    r.balanced_accuracy = r.set("balanced_accuracy", metrics::balanced_accuracy(predictions, golds));
    r.accuracy_nonfactual =
        r.set("accuracy_nonfactual", metrics::class_accuracy(predictions, golds, Label::Nonfactual));
    r.accuracy_factual = r.set("accuracy_factual", metrics::class_accuracy(predictions, golds, Label::Factual));
    r.accuracy = r.set("accuracy", metrics::accuracy(predictions, golds));
    r.counts.insert("segments".into(), golds.len());
    r.counts.insert("gold_nonfactual".into(), golds.iter().filter(|&&g| g == Label::Nonfactual).count());
    r.counts.insert("predicted_nonfactual".into(), predictions.iter().filter(|&&p| p == Label::Nonfactual).count());
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionRun {
    pub report: MetricsReport,
    pub segments: Vec<VerdictedClaim>,
}

/// Verifies each pre-segmented unit as one claim and scores it.
pub fn eval_detection(ceg: &Ceg, records: &[LabeledSegment]) -> Result<DetectionRun, PipelineError> {
    let mut segments = Vec::with_capacity(records.len());
    for r in records {
        segments.push(ceg.check_segment(r.question.as_deref().unwrap_or(""), &r.text)?);
    }
    let predictions: Vec<Label> = segments.iter().map(|s| s.verdict.label).collect();
    let scores: Vec<f64> = segments.iter().map(nonfactual_score).collect();
    let golds: Vec<Label> = records.iter().map(|r| r.gold_label).collect();
    Ok(DetectionRun { report: detection_report(&predictions, &scores, &golds), segments })
}

/// Agreement of the verifier with human labels on retrieved evidence.
pub fn eval_agreement(ceg: &Ceg, records: &[LabeledSegment]) -> Result<DetectionRun, PipelineError> {
    let mut run = eval_detection(ceg, records)?;
    let predictions: Vec<Label> = run.segments.iter().map(|s| s.verdict.label).collect();
    let golds: Vec<Label> = records.iter().map(|r| r.gold_label).collect();
    let mut report = MetricsReport::new("agreement");
    report.agreement_rate = report.set("agreement_rate", metrics::agreement_rate(&predictions, &golds));
    report.counts.insert("segments".into(), records.len());
    run.report = report;
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct QaRun {
    pub report: MetricsReport,
    pub judgements: Vec<Option<QaJudgement>>,
}

/// Accuracy = fraction of pairs where the right answer was chosen; pairs with
/// an unparseable final choice count as wrong. Transport failures abort.
pub fn eval_qa(ceg: &Ceg, records: &[QaPairRecord]) -> Result<QaRun, PipelineError> {
    let mut judgements = Vec::with_capacity(records.len());
    let mut unparseable = 0;
    for r in records {
        match judge_qa_pair(ceg, r) {
            Ok(j) => judgements.push(Some(j)),
            Err(e) if e.is_transport() => return Err(e),
            Err(e @ PipelineError::Verify(_)) => {
                tracing::warn!(question = %r.question, error = %e, "no usable choice");
                unparseable += 1;
                judgements.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let correct = judgements.iter().flatten().filter(|j| j.correct).count();
    let regenerated = judgements.iter().flatten().filter(|j| j.run.regenerations() > 0).count();
    let mut report = MetricsReport::new("qa");
    report.accuracy = if records.is_empty() {
        report.set("accuracy", Err(MetricError::Empty))
    } else {
        Some(correct as f64 / records.len() as f64)
    };
    report.counts.insert("pairs".into(), records.len());
    report.counts.insert("correct".into(), correct);
    report.counts.insert("unparseable".into(), unparseable);
    report.counts.insert("regenerated".into(), regenerated);
    Ok(QaRun { report, judgements })
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievalRunRecord {
    pub claim: String,
    pub original_doc_id: u64,
    pub retrieved: Vec<u64>,
    pub relations: Vec<NliRelation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievalRun {
    pub report: MetricsReport,
    pub records: Vec<RetrievalRunRecord>,
}

/// Recall@k against the source chunk, and, when `nli` is given, Precision@k
/// from judging each top-k doc separately. No similarity threshold is applied.
pub fn eval_retrieval(
    retriever: &Retriever,
    store: &DocStore,
    nli: Option<&dyn NliMethod>,
    records: &[RetrEvalRecord],
    k: usize,
) -> Result<RetrievalRun, PipelineError> {
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let set = retriever.retrieve(i, &r.claim, k, -1.0)?;
        let mut relations = Vec::new();
        if let Some(nli) = nli {
            let claim = Claim::whole(1, &r.claim);
            for d in &set.docs {
                let chunk = store.get_chunk(d.doc_id)?;
                let doc = EvidenceDoc {
                    doc_id: d.doc_id,
                    score: d.score,
                    source_title: chunk.source_title.clone(),
                    text: chunk.text.clone(),
                };
                relations.push(nli.judge("", &claim, std::slice::from_ref(&doc))?.relation);
            }
        }
        out.push(RetrievalRunRecord {
            claim: r.claim.clone(),
            original_doc_id: r.original_doc_id,
            retrieved: set.doc_ids(),
            relations,
        });
    }
    let runs: Vec<Vec<u64>> = out.iter().map(|r| r.retrieved.clone()).collect();
    let golds: Vec<u64> = out.iter().map(|r| r.original_doc_id).collect();
    let mut report = MetricsReport::new("retrieval");
    report.k = Some(k);
    report.recall_at_k = report.set("recall_at_k", metrics::recall_at_k(&runs, &golds, k));
    if nli.is_some() {
        let per_doc: Vec<Vec<NliRelation>> = out.iter().map(|r| r.relations.clone()).collect();
        report.precision_at_k = report.set("precision_at_k", metrics::precision_at_k(&per_doc, k));
    }
    report.counts.insert("claims".into(), records.len());
    report.counts.insert("gold_missing".into(), golds.iter().filter(|&&g| g as usize >= store.len()).count());
    Ok(RetrievalRun { report, records: out })
}
