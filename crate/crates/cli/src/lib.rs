//! `ceg` command-line driver.
//!
//! Exit codes: 0 success or clean, 2 usage or I/O error, 3 nonfactual content
//! remains, 4 generation backend failure.

pub mod commands;
pub mod config;
pub mod render;

use std::io::Write;
use std::path::PathBuf;

use ceg_core::corpus::CorpusError;
use ceg_core::eval::DatasetError;
use ceg_core::index::RetrievalError;
use ceg_core::llm::{BackendError, TemplateError};
use ceg_core::{PipelineError, VerifyMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{BackendKind, EmbedderKind, Format, NliKind, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONFACTUAL: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("backend unavailable: {0}")]
    Backend(String),
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Backend(_) => EXIT_BACKEND,
            CliError::Pipeline(e) if e.is_transport() => EXIT_BACKEND,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ceg", version, about = "Post-hoc citation and fact checking for generated text")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> Result<VerifyMode, String> {
    s.parse()
}

/// Flags shared by every subcommand; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Documents retrieved per claim.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Minimum cosine similarity for docs after the first.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Maximum regeneration attempts.
    #[arg(long, global = true)]
    pub max_regen: Option<u32>,
    /// Verifier mode: concatenated or per-doc.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<VerifyMode>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Replay script for the mock backend.
    #[arg(long, global = true)]
    pub transcript: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub nli: Option<NliKind>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    /// Abbreviation list for the segmenter, one per line.
    #[arg(long, global = true)]
    pub abbreviations: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub embedder: Option<EmbedderKind>,
    /// Requests per minute sent to the backend.
    #[arg(long, global = true)]
    pub rate_limit: Option<u32>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
}

impl GlobalArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => { $( if let Some(v) = &self.$field { cfg.$field = v.clone(); } )* };
        }
        apply!(k, threshold, max_regen, mode, backend, nli, model, jobs, seed, format, dim, embedder, temperature);
        macro_rules! apply_opt {
            ($($field:ident),*) => { $( if self.$field.is_some() { cfg.$field = self.$field.clone(); } )* };
        }
        apply_opt!(transcript, corpus, index, prompts, abbreviations, rate_limit);
        cfg.pipeline().validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalTask {
    /// Segment-level hallucination detection.
    Detect,
    /// Two-answer QA judging with regeneration.
    Qa,
    /// Recall@k and Precision@k against rewritten claims.
    Retrieval,
    /// Verifier agreement with human labels.
    Agreement,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a source file into chunks and append them to a corpus directory.
    Chunk {
        /// Plain text (one article) or JSON lines of {"title", "text"}.
        source: PathBuf,
        /// Corpus directory; created when missing.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        /// Title for a plain-text source; defaults to the file stem.
        #[arg(long)]
        title: Option<String>,
    },
    /// Embed every chunk of the corpus into an index file.
    Index {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite an existing index of a different dimension.
        #[arg(long)]
        force: bool,
    },
    /// Verify and cite a response without regenerating it.
    Annotate {
        #[arg(long)]
        question: String,
        /// Response file; stdin when omitted.
        #[arg(long)]
        response: Option<PathBuf>,
    },
    /// Verify a response and regenerate while nonfactual claims remain.
    Regen {
        #[arg(long)]
        question: String,
        /// Initial response file (`-` for stdin); generated from the question when omitted.
        #[arg(long)]
        response: Option<PathBuf>,
    },
    /// Show the evidence retrieved for a query.
    Retrieve {
        query: String,
    },
    /// Run a benchmark and write report.json and report.md.
    Eval {
        #[arg(long, value_enum)]
        task: EvalTask,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// QA only: write per-pair traces to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build a retrieval benchmark by rewriting sampled chunks into claims.
    Rewrite {
        #[arg(long)]
        sample: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs one parsed invocation and returns its exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = cli.global.resolve()?;
    tracing::debug!(?cfg, "resolved configuration");
    match &cli.command {
        Command::Chunk { source, out: dir, budget, title } => {
            commands::chunk(&cfg, source, dir, budget.unwrap_or(cfg.chunk_budget), title.as_deref(), out)
        }
        Command::Index { out: path, force } => commands::index(&cfg, path.as_deref(), *force, out),
        Command::Annotate { question, response } => commands::annotate(&cfg, question, response.as_deref(), out),
        Command::Regen { question, response } => commands::regen(&cfg, question, response.as_deref(), out),
        Command::Retrieve { query } => commands::retrieve(&cfg, query, out),
        Command::Eval { task, dataset, out: dir, trace } => commands::eval(&cfg, *task, dataset, dir, trace.as_deref(), out),
        Command::Rewrite { sample, out: path } => commands::rewrite(&cfg, *sample, path, out),
    }
}
