//! Candidate-document store.
//!
//! Source articles are cut into chunks of roughly `budget` words. A chunk only
//! ever ends where the source has a word-final period or a line break, so every
//! chunk is a run of whole sentences (or lines). A single sentence longer than
//! the budget becomes an oversized chunk of its own.
//!
//! On disk a store is a directory holding `docs.jsonl` (one [`DocChunk`] per
//! line, ids dense from 0) and `manifest.json` ([`CorpusManifest`]).

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::text::word_spans;

pub const DOCS_FILE: &str = "docs.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_CHUNK_BUDGET: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record in {path} at line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("storage integrity violation: {0}")]
    Integrity(String),
    #[error("chunk {id} not found (store holds {count} chunks)")]
    NotFound { id: u64, count: u64 },
    #[error("invalid chunk budget {0}; must be at least 1")]
    InvalidBudget(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

/// One candidate document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocChunk {
    pub id: u64,
    pub text: String,
    pub source_title: String,
    /// Offset of the chunk's first character, counted in characters.
    pub source_offset: u64,
    pub word_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub chunk_count: u64,
    pub chunk_budget: u32,
    pub source_description: String,
    pub created_at: String,
    pub format_version: u32,
}

/// Splits one article into chunks. Ids are local, starting at 0; [`DocStore::ingest`]
/// renumbers them into the store's id space.
pub fn chunk_source(article_text: &str, title: &str, budget: usize) -> Result<Vec<DocChunk>, CorpusError> {
    if budget == 0 {
        return Err(CorpusError::InvalidBudget(budget));
    }
    let words = word_spans(article_text);
    if words.is_empty() {
        return Ok(Vec::new());
    }

    // Sentence units as half-open ranges into `words`.
    let mut units = Vec::new();
    let mut unit_start = 0;
    for (i, &(s, e)) in words.iter().enumerate() {
        let ends_with_period = article_text[s..e].ends_with('.');
        let newline_follows = match words.get(i + 1) {
            Some(&(next, _)) => article_text[e..next].contains('\n'),
            None => true,
        };
        if ends_with_period || newline_follows {
            units.push((unit_start, i + 1));
            unit_start = i + 1;
        }
    }

    let mut chunks = Vec::new();
    let emit = |first: usize, last: usize, chunks: &mut Vec<DocChunk>| {
        let start = words[first].0;
        let end = words[last - 1].1;
        chunks.push(DocChunk {
            id: chunks.len() as u64,
            text: article_text[start..end].to_string(),
            source_title: title.to_string(),
            source_offset: article_text[..start].chars().count() as u64,
            word_count: (last - first) as u32,
        });
    };

    let mut open: Option<(usize, usize)> = None;
    for (first, last) in units {
        let len = last - first;
        open = match open {
            Some((cf, cl)) if (cl - cf) + len <= budget => Some((cf, last)),
            Some((cf, cl)) => {
                emit(cf, cl, &mut chunks);
                Some((first, last))
            }
            None => Some((first, last)),
        };
        // An oversized unit can never share a chunk.
        if let Some((cf, cl)) = open {
            if cl - cf > budget {
                emit(cf, cl, &mut chunks);
                open = None;
            }
        }
    }
    if let Some((cf, cl)) = open {
        emit(cf, cl, &mut chunks);
    }
    Ok(chunks)
}

/// Append-only chunk store, optionally backed by a directory.
#[derive(Debug)]
pub struct DocStore {
    dir: Option<PathBuf>,
    manifest: CorpusManifest,
    chunks: Vec<DocChunk>,
}

fn timestamp_now() -> String {
    // SOURCE_DATE_EPOCH pins the timestamp for reproducible artifacts.
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl DocStore {
    pub fn in_memory(chunk_budget: usize, source_description: &str) -> Self {
        DocStore {
            dir: None,
            manifest: CorpusManifest {
                chunk_count: 0,
                chunk_budget: chunk_budget as u32,
                source_description: source_description.to_string(),
                created_at: timestamp_now(),
                format_version: FORMAT_VERSION,
            },
            chunks: Vec::new(),
        }
    }

    /// Creates an empty store in `dir`, truncating any previous store files there.
    pub fn create(dir: &Path, chunk_budget: usize, source_description: &str) -> Result<Self, CorpusError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let docs = dir.join(DOCS_FILE);
        File::create(&docs).map_err(io_err(&docs))?;
        let mut store = Self::in_memory(chunk_budget, source_description);
        store.dir = Some(dir.to_path_buf());
        store.write_manifest()?;
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<Self, CorpusError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let raw = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: CorpusManifest = serde_json::from_str(&raw)
            .map_err(|source| CorpusError::Json { path: manifest_path.clone(), line: 1, source })?;

        let docs_path = dir.join(DOCS_FILE);
        let file = File::open(&docs_path).map_err(io_err(&docs_path))?;
        let mut chunks = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&docs_path))?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: DocChunk = serde_json::from_str(&line)
                .map_err(|source| CorpusError::Json { path: docs_path.clone(), line: n + 1, source })?;
            if chunk.id != chunks.len() as u64 {
                return Err(CorpusError::Integrity(format!(
                    "{} line {}: expected id {}, found {}",
                    docs_path.display(),
                    n + 1,
                    chunks.len(),
                    chunk.id
                )));
            }
            chunks.push(chunk);
        }
        if manifest.chunk_count != chunks.len() as u64 {
            return Err(CorpusError::Integrity(format!(
                "manifest lists {} chunks but {} holds {}",
                manifest.chunk_count,
                DOCS_FILE,
                chunks.len()
            )));
        }
        Ok(DocStore { dir: Some(dir.to_path_buf()), manifest, chunks })
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[DocChunk] {
        &self.chunks
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get_chunk(&self, id: u64) -> Result<&DocChunk, CorpusError> {
        usize::try_from(id)
            .ok()
            .and_then(|i| self.chunks.get(i))
            .ok_or(CorpusError::NotFound { id, count: self.chunks.len() as u64 })
    }

    /// Appends chunks whose ids continue the store's id sequence.
    pub fn put_chunks(&mut self, chunks: Vec<DocChunk>) -> Result<&CorpusManifest, CorpusError> {
        if chunks.is_empty() {
            return Ok(&self.manifest);
        }
        let base = self.chunks.len() as u64;
        for (i, chunk) in chunks.iter().enumerate() {
            let expected = base + i as u64;
            if chunk.id != expected {
                return Err(CorpusError::Integrity(format!(
                    "chunk id {} collides with or skips the id sequence (expected {expected})",
                    chunk.id
                )));
            }
            if chunk.text.is_empty() || chunk.text.trim() != chunk.text || chunk.word_count == 0 {
                return Err(CorpusError::Integrity(format!(
                    "chunk {} must have non-empty trimmed text and word_count >= 1",
                    chunk.id
                )));
            }
        }

        if let Some(dir) = &self.dir {
            let docs = dir.join(DOCS_FILE);
            let file = OpenOptions::new().append(true).create(true).open(&docs).map_err(io_err(&docs))?;
            let mut out = BufWriter::new(file);
            for chunk in &chunks {
                let line = serde_json::to_string(chunk).expect("DocChunk serializes");
                writeln!(out, "{line}").map_err(io_err(&docs))?;
            }
            let file = out.into_inner().map_err(|e| io_err(&docs)(e.into_error()))?;
            file.sync_all().map_err(io_err(&docs))?;
        }
        self.chunks.extend(chunks);
        self.manifest.chunk_count = self.chunks.len() as u64;
        self.write_manifest()?;
        Ok(&self.manifest)
    }

    /// Chunks one article and appends it; returns the number of chunks added.
    pub fn ingest(&mut self, article_text: &str, title: &str) -> Result<usize, CorpusError> {
        let base = self.chunks.len() as u64;
        let mut chunks = chunk_source(article_text, title, self.manifest.chunk_budget as usize)?;
        for chunk in &mut chunks {
            chunk.id += base;
        }
        let added = chunks.len();
        self.put_chunks(chunks)?;
        Ok(added)
    }

    fn write_manifest(&self) -> Result<(), CorpusError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let body = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&tmp, body + "\n").map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(id: u64, text: &str) -> DocChunk {
        DocChunk {
            id,
            text: text.to_string(),
            source_title: "T".into(),
            source_offset: 0,
            word_count: text.split_whitespace().count() as u32,
        }
    }

    #[test]
    fn empty_input_gives_no_chunks() {
        assert!(chunk_source("", "t", 100).unwrap().is_empty());
        assert!(chunk_source(" \n\t ", "t", 100).unwrap().is_empty());
    }

    #[test]
    fn short_article_is_one_chunk() {
        let chunks = chunk_source("One two three. Four five.", "t", 100).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].word_count, 5);
        assert_eq!(chunks[0].text, "One two three. Four five.");
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(matches!(chunk_source("a.", "t", 0), Err(CorpusError::InvalidBudget(0))));
    }

    #[test]
    fn packs_sentences_greedily() {
        let chunks = chunk_source("a b. c d. e f.", "t", 4).unwrap();
        let texts: Vec<_> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["a b. c d.", "e f."]);
        assert_eq!(chunks[1].source_offset, 10);
    }

    #[test]
    fn oversized_sentence_stands_alone() {
        let chunks = chunk_source("a b. c d e f g. h.", "t", 3).unwrap();
        let counts: Vec<_> = chunks.iter().map(|c| c.word_count).collect();
        assert_eq!(counts, [2, 5, 1]);
    }

    #[test]
    fn newline_is_a_boundary() {
        let chunks = chunk_source("heading line\nbody one two", "t", 3).unwrap();
        let texts: Vec<_> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["heading line", "body one two"]);
    }

    #[test]
    fn offsets_count_characters() {
        let chunks = chunk_source("Éé ü. x y.", "t", 2).unwrap();
        assert_eq!(chunks[1].source_offset, 6);
        assert_eq!(chunks[1].text, "x y.");
    }

    #[test]
    fn put_and_get_in_memory() {
        let mut store = DocStore::in_memory(100, "test");
        assert_eq!(store.put_chunks(vec![]).unwrap().chunk_count, 0);
        store.put_chunks(vec![chunk(0, "alpha."), chunk(1, "beta."), chunk(2, "gamma.")]).unwrap();
        assert_eq!(store.manifest().chunk_count, 3);
        assert_eq!(store.get_chunk(0).unwrap().text, "alpha.");
        assert!(matches!(store.get_chunk(7), Err(CorpusError::NotFound { id: 7, count: 3 })));
    }

    #[test]
    fn id_collision_is_integrity_error() {
        let mut store = DocStore::in_memory(100, "test");
        store.put_chunks(vec![chunk(0, "alpha.")]).unwrap();
        let err = store.put_chunks(vec![chunk(0, "again.")]).unwrap_err();
        assert!(matches!(err, CorpusError::Integrity(_)));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn untrimmed_text_rejected() {
        let mut store = DocStore::in_memory(100, "test");
        assert!(store.put_chunks(vec![chunk(0, " alpha.")]).is_err());
    }
}
