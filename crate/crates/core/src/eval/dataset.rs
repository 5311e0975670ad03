//! JSON-lines dataset records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::verify::Label;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} line {line}: {message}")]
    Invalid { path: PathBuf, line: usize, message: String },
}

/// Record id; datasets use both numbers and strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordId {
    Num(u64),
    Text(String),
}

impl std::fmt::Display for RecordId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordId::Num(n) => write!(f, "{n}"),
            RecordId::Text(s) => f.write_str(s),
        }
    }
}

/// A gold-labeled response segment (detection benchmarks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSegment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<RecordId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub text: String,
    pub gold_label: Label,
    /// Higher = more nonfactual.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Question with one right and one hallucinated answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPairRecord {
    pub question: String,
    pub right_answer: String,
    pub hallucinated_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<String>,
}

/// A rewritten claim and the chunk it was written from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrEvalRecord {
    pub claim: String,
    pub original_doc_id: u64,
}

pub trait Validate {
    fn validate(&self) -> Result<(), String>;
}

impl Validate for LabeledSegment {
    fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        match self.score {
            Some(s) if !s.is_finite() => Err("score is not finite".into()),
            _ => Ok(()),
        }
    }
}

impl Validate for QaPairRecord {
    fn validate(&self) -> Result<(), String> {
        if self.right_answer.trim().is_empty() || self.hallucinated_answer.trim().is_empty() {
            return Err("both answers must be non-empty".into());
        }
        Ok(())
    }
}

impl Validate for RetrEvalRecord {
    fn validate(&self) -> Result<(), String> {
        if self.claim.trim().is_empty() {
            return Err("empty claim".into());
        }
        Ok(())
    }
}

/// Reads one record per non-blank line.
pub fn read_jsonl<T: DeserializeOwned + Validate>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let io = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line)
            .map_err(|source| DatasetError::Parse { path: path.to_path_buf(), line: n + 1, source })?;
        record
            .validate()
            .map_err(|message| DatasetError::Invalid { path: path.to_path_buf(), line: n + 1, message })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).expect("record serializes")).map_err(io)?;
    }
    out.flush().map_err(io)
}
