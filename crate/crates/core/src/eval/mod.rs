//! Datasets, metrics and benchmark drivers.

pub mod dataset;
pub mod metrics;
pub mod qa;
pub mod report;
pub mod rewrite;

pub use dataset::{read_jsonl, write_jsonl, DatasetError, LabeledSegment, QaPairRecord, RecordId, RetrEvalRecord, Validate};
pub use metrics::{
    accuracy, agreement_rate, auc_pr, balanced_accuracy, balanced_accuracy_for, class_accuracy, precision_at_k,
    recall_at_k, Confusion, MetricError,
};
pub use qa::{judge_qa_pair, parse_choice, render_trace, QaJudgement};
pub use report::{
    detection_report, eval_agreement, eval_detection, eval_qa, eval_retrieval, nonfactual_score, DetectionRun,
    MetricsReport, QaRun, RetrievalRun, RetrievalRunRecord,
};
pub use rewrite::{build_rewrite_dataset, sample_ids, RewriteOutcome};
