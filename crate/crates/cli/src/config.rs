//! Run configuration: a JSON file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use ceg_core::corpus::DEFAULT_CHUNK_BUDGET;
use ceg_core::index::{DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use ceg_core::llm::REGENERATE_OPEN;
use ceg_core::pipeline::DEFAULT_MAX_REGEN;
use ceg_core::{PipelineConfig, VerifyMode};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const INDEX_FILE: &str = "index.bin";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Remote,
    Mock,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NliKind {
    /// The generation backend judges with the NLI prompt.
    #[default]
    Llm,
    /// Offline word-containment judge.
    Lexical,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hashing,
    Http,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Md,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    /// Defaults to `index.bin` inside the corpus directory.
    pub index: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub k: usize,
    pub threshold: f64,
    pub max_regen: u32,
    pub mode: VerifyMode,
    pub temperature: f64,
    pub chunk_budget: usize,
    pub dim: usize,
    pub embedder: EmbedderKind,
    pub backend: BackendKind,
    pub transcript: Option<PathBuf>,
    pub model: String,
    pub nli: NliKind,
    /// Requests per minute; unlimited when absent.
    pub rate_limit: Option<u32>,
    /// Maximum rendered prompt length in characters.
    pub char_budget: Option<usize>,
    pub regen_template: String,
    pub generation_attempts: u32,
    pub seed: u64,
    pub jobs: usize,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            index: None,
            prompts: None,
            abbreviations: None,
            k: DEFAULT_TOP_K,
            threshold: DEFAULT_THRESHOLD,
            max_regen: DEFAULT_MAX_REGEN,
            mode: VerifyMode::default(),
            temperature: 0.0,
            chunk_budget: DEFAULT_CHUNK_BUDGET,
            dim: DEFAULT_DIM,
            embedder: EmbedderKind::default(),
            backend: BackendKind::default(),
            transcript: None,
            model: DEFAULT_MODEL.into(),
            nli: NliKind::default(),
            rate_limit: None,
            char_budget: None,
            regen_template: REGENERATE_OPEN.into(),
            generation_attempts: 3,
            seed: 0,
            jobs: 1,
            format: Format::default(),
        }
    }
}

impl RunConfig {
    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&raw)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.corpus, &mut cfg.index, &mut cfg.prompts, &mut cfg.abbreviations, &mut cfg.transcript]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            threshold: self.threshold,
            max_regen: self.max_regen,
            mode: self.mode,
            temperature: self.temperature,
            chunk_budget: self.chunk_budget,
            regen_template: self.regen_template.clone(),
            generation_attempts: self.generation_attempts,
            jobs: self.jobs.max(1),
            ..PipelineConfig::default()
        }
    }

    pub fn corpus_dir(&self) -> Result<&Path, CliError> {
        self.corpus.as_deref().ok_or_else(|| CliError::Usage("no corpus directory given (--corpus)".into()))
    }

    pub fn index_path(&self) -> Result<PathBuf, CliError> {
        match &self.index {
            Some(p) => Ok(p.clone()),
            None => Ok(self.corpus_dir()?.join(INDEX_FILE)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"corpus": "c", "k": 3, "mode": "per-doc", "backend": "mock"}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.corpus.as_deref(), Some(dir.path().join("c").as_path()));
        assert_eq!(cfg.index_path().unwrap(), dir.path().join("c").join(INDEX_FILE));
        assert_eq!((cfg.k, cfg.mode, cfg.backend), (3, VerifyMode::PerDoc, BackendKind::Mock));
        assert_eq!(cfg.threshold, DEFAULT_THRESHOLD);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"top_k": 3}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Usage(_))));
    }
}
