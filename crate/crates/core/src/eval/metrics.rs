//! Detection and retrieval metrics. Nonfactual is the positive class unless stated.

use crate::verify::{Label, NliRelation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("metric needs at least one item")]
    Empty,
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("score at position {0} is not finite")]
    NonFinite(usize),
}

fn check_lengths(left: usize, right: usize) -> Result<(), MetricError> {
    if left != right {
        return Err(MetricError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn tally(predictions: &[Label], golds: &[Label], positive: Label) -> Result<Self, MetricError> {
        check_lengths(predictions.len(), golds.len())?;
        let mut c = Confusion::default();
        for (&p, &g) in predictions.iter().zip(golds) {
            match (p == positive, g == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn tpr(&self) -> Option<f64> {
        let p = self.tp + self.fn_;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn tnr(&self) -> Option<f64> {
        let n = self.tn + self.fp;
        (n > 0).then(|| self.tn as f64 / n as f64)
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / (self.tp + self.tn + self.fp + self.fn_) as f64
    }

    pub fn balanced_accuracy(&self) -> Result<f64, MetricError> {
        match (self.tpr(), self.tnr()) {
            (Some(tpr), Some(tnr)) => Ok((tpr + tnr) / 2.0),
            (None, _) => Err(MetricError::Undefined("no positive items in golds".into())),
            (_, None) => Err(MetricError::Undefined("no negative items in golds".into())),
        }
    }
}

/// (TPR + TNR) / 2 with Nonfactual as the positive class.
pub fn balanced_accuracy(predictions: &[Label], golds: &[Label]) -> Result<f64, MetricError> {
    balanced_accuracy_for(predictions, golds, Label::Nonfactual)
}

pub fn balanced_accuracy_for(predictions: &[Label], golds: &[Label], positive: Label) -> Result<f64, MetricError> {
    Confusion::tally(predictions, golds, positive)?.balanced_accuracy()
}

pub fn accuracy(predictions: &[Label], golds: &[Label]) -> Result<f64, MetricError> {
    Ok(Confusion::tally(predictions, golds, Label::Nonfactual)?.accuracy())
}

/// Fraction of items of gold class `class` that were predicted as `class`.
pub fn class_accuracy(predictions: &[Label], golds: &[Label], class: Label) -> Result<f64, MetricError> {
    Confusion::tally(predictions, golds, class)?
        .tpr()
        .ok_or_else(|| MetricError::Undefined(format!("no {class:?} items in golds")))
}

/// Area under the precision-recall curve with step interpolation.
///
/// `scores` rank the positive class (higher = more likely `positive`). The sweep
/// visits each distinct score once, highest first, so tied items enter together;
/// the area is the sum of precision × recall increment over those thresholds.
pub fn auc_pr(scores: &[f64], golds: &[Label], positive: Label) -> Result<f64, MetricError> {
    check_lengths(scores.len(), golds.len())?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let total_pos = golds.iter().filter(|&&g| g == positive).count();
    if total_pos == 0 {
        return Err(MetricError::Undefined(format!("no {positive:?} items in golds")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if golds[order[i]] == positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    Ok(area)
}

/// Fraction of queries whose gold id is among the first `k` retrieved ids.
pub fn recall_at_k(runs: &[Vec<u64>], golds: &[u64], k: usize) -> Result<f64, MetricError> {
    check_lengths(runs.len(), golds.len())?;
    let hits = runs.iter().zip(golds).filter(|(run, gold)| run.iter().take(k).any(|id| id == *gold)).count();
    Ok(hits as f64 / runs.len() as f64)
}

/// Fraction of claims with at least one `Supports` among the relations of their first `k` docs.
pub fn precision_at_k(per_doc: &[Vec<NliRelation>], k: usize) -> Result<f64, MetricError> {
    if per_doc.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = per_doc.iter().filter(|rels| rels.iter().take(k).any(|&r| r == NliRelation::Supports)).count();
    Ok(hits as f64 / per_doc.len() as f64)
}

/// Fraction of positions where two labelings agree.
pub fn agreement_rate(a: &[Label], b: &[Label]) -> Result<f64, MetricError> {
    check_lengths(a.len(), b.len())?;
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}
