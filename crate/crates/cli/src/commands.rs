use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ceg_core::corpus::MANIFEST_FILE;
use ceg_core::eval::{self, read_jsonl, render_trace, write_jsonl, LabeledSegment, QaPairRecord, RetrEvalRecord};
use ceg_core::llm::{Backend, ChatCompletionBackend, Gateway, ScriptedBackend, TemplateSet, Transcript};
use ceg_core::verify::EvidenceDoc;
use ceg_core::{
    build_index, AnnotatedResponse, Ceg, DocStore, Embedder, HashingEmbedder, HttpEmbedder, LexicalNli, LlmNli,
    NliMethod, Retriever, RunStatus, Segmenter, VectorIndex,
};
use serde::{Deserialize, Serialize};

use crate::config::{BackendKind, EmbedderKind, Format, NliKind, RunConfig};
use crate::render;
use crate::{CliError, EvalTask, EXIT_BACKEND, EXIT_NONFACTUAL, EXIT_OK};

#[derive(Deserialize)]
struct SourceArticle {
    title: String,
    text: String,
}

fn read_articles(source: &Path, title: Option<&str>) -> Result<Vec<SourceArticle>, CliError> {
    let raw = std::fs::read_to_string(source).map_err(CliError::io(format!("cannot read {}", source.display())))?;
    if source.extension().is_some_and(|e| e == "jsonl") {
        return raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l)
                    .map_err(|e| CliError::Usage(format!("{} line {}: {e}", source.display(), n + 1)))
            })
            .collect();
    }
    let title = title
        .map(str::to_string)
        .unwrap_or_else(|| source.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    Ok(vec![SourceArticle { title, text: raw }])
}

pub fn chunk(
    _cfg: &RunConfig,
    source: &Path,
    dir: &Path,
    budget: usize,
    title: Option<&str>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let articles = read_articles(source, title)?;
    let mut store = if dir.join(MANIFEST_FILE).exists() {
        DocStore::open(dir)?
    } else {
        DocStore::create(dir, budget, &source.display().to_string())?
    };
    let mut added = 0;
    for a in &articles {
        added += store.ingest(&a.text, &a.title)?;
    }
    writeln!(out, "{added} chunks ({} in corpus)", store.len()).map_err(CliError::io("stdout"))?;
    Ok(EXIT_OK)
}

fn embedder(kind: EmbedderKind, dim: usize) -> Result<Arc<dyn Embedder>, CliError> {
    Ok(match kind {
        EmbedderKind::Hashing => {
            Arc::new(HashingEmbedder::new(dim).map_err(|e| CliError::Usage(e.to_string()))?)
        }
        EmbedderKind::Http => Arc::new(HttpEmbedder::from_env(dim).map_err(|e| CliError::Usage(e.to_string()))?),
    })
}

pub fn index(cfg: &RunConfig, path: Option<&Path>, force: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let store = DocStore::open(cfg.corpus_dir()?)?;
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => cfg.index_path()?,
    };
    if path.exists() && !force {
        let (dim, _) = VectorIndex::peek_header(&path)?;
        if dim != cfg.dim {
            return Err(CliError::Usage(format!(
                "{} holds dim-{dim} vectors; refusing to overwrite with dim {} (pass --force)",
                path.display(),
                cfg.dim
            )));
        }
    }
    let index = build_index(&store, embedder(cfg.embedder, cfg.dim)?.as_ref())?;
    index.save(&path)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    writeln!(out, "indexed {} chunks (dim {}) into {} ({bytes} bytes)", index.len(), index.dim(), path.display())
        .map_err(CliError::io("stdout"))?;
    Ok(EXIT_OK)
}

fn backend(cfg: &RunConfig) -> Result<Arc<dyn Backend>, CliError> {
    Ok(match cfg.backend {
        BackendKind::Mock => {
            let transcript = match &cfg.transcript {
                Some(p) => Transcript::load(p)?,
                None => Transcript::default(),
            };
            Arc::new(ScriptedBackend::new(transcript))
        }
        BackendKind::Remote => Arc::new(ChatCompletionBackend::from_env(cfg.model.clone())?),
    })
}

pub fn gateway(cfg: &RunConfig) -> Result<Arc<Gateway>, CliError> {
    let templates = match &cfg.prompts {
        Some(dir) => TemplateSet::with_overrides(dir)?,
        None => TemplateSet::builtin(),
    };
    let mut g = Gateway::new(backend(cfg)?).with_templates(templates);
    if let Some(rpm) = cfg.rate_limit {
        g = g.with_rate_limit(rpm);
    }
    if let Some(budget) = cfg.char_budget {
        g = g.with_char_budget(budget);
    }
    Ok(Arc::new(g))
}

/// Opens the corpus and its index; the query embedder takes the index dimension.
pub fn load_retrieval(cfg: &RunConfig) -> Result<(Arc<DocStore>, Retriever), CliError> {
    let store = Arc::new(DocStore::open(cfg.corpus_dir()?)?);
    let index = VectorIndex::load(&cfg.index_path()?)?;
    let dim = index.dim();
    Ok((store, Retriever::new(Arc::new(index), embedder(cfg.embedder, dim)?)?))
}

pub fn load_pipeline(cfg: &RunConfig) -> Result<Ceg, CliError> {
    let (store, retriever) = load_retrieval(cfg)?;
    let gateway = gateway(cfg)?;
    let nli: Arc<dyn NliMethod> = match cfg.nli {
        NliKind::Lexical => Arc::new(LexicalNli::default()),
        NliKind::Llm => Arc::new(
            LlmNli::new(gateway.clone()).with_temperature(cfg.temperature).with_max_attempts(cfg.generation_attempts),
        ),
    };
    let mut ceg = Ceg::new(store, retriever, nli, gateway, cfg.pipeline())?;
    if let Some(path) = &cfg.abbreviations {
        let seg = Segmenter::from_file(path).map_err(CliError::io(format!("cannot read {}", path.display())))?;
        ceg = ceg.with_segmenter(seg);
    }
    Ok(ceg)
}

fn read_input(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).map_err(CliError::io(format!("cannot read {}", p.display())))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(CliError::io("cannot read stdin"))?;
            Ok(s)
        }
    }
}

fn emit<T: Serialize>(cfg: &RunConfig, value: &T, md: impl FnOnce() -> String, out: &mut dyn Write) -> Result<(), CliError> {
    let text = match cfg.format {
        Format::Json => serde_json::to_string_pretty(value).expect("output serializes") + "\n",
        Format::Md => md(),
    };
    out.write_all(text.as_bytes()).map_err(CliError::io("stdout"))
}

fn status_code(result: &AnnotatedResponse) -> i32 {
    match result.status {
        RunStatus::TransportFailure => EXIT_BACKEND,
        _ if result.has_nonfactual() => EXIT_NONFACTUAL,
        _ => EXIT_OK,
    }
}

pub fn annotate(cfg: &RunConfig, question: &str, response: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let text = read_input(response)?;
    let ceg = load_pipeline(&RunConfig { max_regen: 0, ..cfg.clone() })?;
    let result = ceg.run_ceg(question, Some(text.trim_end()))?;
    emit(cfg, &result, || render::annotated_markdown(&result), out)?;
    Ok(status_code(&result))
}

pub fn regen(cfg: &RunConfig, question: &str, response: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let initial = response.map(|p| read_input(Some(p))).transpose()?;
    let ceg = load_pipeline(cfg)?;
    let result = ceg.run_ceg(question, initial.as_deref().map(str::trim_end))?;
    emit(cfg, &result, || render::annotated_markdown(&result), out)?;
    Ok(status_code(&result))
}

#[derive(Serialize)]
pub struct RetrieveOutput {
    pub query: String,
    pub k: usize,
    pub threshold: f64,
    pub docs: Vec<EvidenceDoc>,
}

pub fn retrieve(cfg: &RunConfig, query: &str, out: &mut dyn Write) -> Result<i32, CliError> {
    let (store, retriever) = load_retrieval(cfg)?;
    let set = retriever.retrieve(0, query, cfg.k, cfg.threshold)?;
    let docs = set
        .docs
        .iter()
        .map(|d| {
            let chunk = store.get_chunk(d.doc_id)?;
            Ok(EvidenceDoc { doc_id: d.doc_id, score: d.score, source_title: chunk.source_title.clone(), text: chunk.text.clone() })
        })
        .collect::<Result<_, CliError>>()?;
    let result = RetrieveOutput { query: query.into(), k: cfg.k, threshold: cfg.threshold, docs };
    emit(cfg, &result, || render::retrieval_markdown(&result), out)?;
    Ok(EXIT_OK)
}

pub fn eval(
    cfg: &RunConfig,
    task: EvalTask,
    dataset: &Path,
    dir: &Path,
    trace: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let ceg = load_pipeline(cfg)?;
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("cannot create {}", dir.display())))?;
    let report = match task {
        EvalTask::Detect | EvalTask::Agreement => {
            let records: Vec<LabeledSegment> = read_jsonl(dataset)?;
            let run = if task == EvalTask::Detect {
                eval::eval_detection(&ceg, &records)?
            } else {
                eval::eval_agreement(&ceg, &records)?
            };
            write_jsonl(&dir.join("predictions.jsonl"), &run.segments)?;
            run.report
        }
        EvalTask::Qa => {
            let records: Vec<QaPairRecord> = read_jsonl(dataset)?;
            let run = eval::eval_qa(&ceg, &records)?;
            if let Some(path) = trace {
                let traces: Vec<String> = records
                    .iter()
                    .zip(&run.judgements)
                    .filter_map(|(r, j)| j.as_ref().map(|j| render_trace(r, &j.run)))
                    .collect();
                std::fs::write(path, traces.join("\n")).map_err(CliError::io(format!("cannot write {}", path.display())))?;
            }
            write_jsonl(&dir.join("predictions.jsonl"), &run.judgements)?;
            run.report
        }
        EvalTask::Retrieval => {
            let records: Vec<RetrEvalRecord> = read_jsonl(dataset)?;
            let run = eval::eval_retrieval(ceg.retriever(), ceg.store(), Some(ceg.nli()), &records, cfg.k)?;
            if run.report.counts.get("gold_missing").copied().unwrap_or(0) > 0 {
                tracing::warn!("some gold doc ids are not in the corpus; they count as misses");
            }
            write_jsonl(&dir.join("predictions.jsonl"), &run.records)?;
            run.report
        }
    };
    report.write(dir).map_err(CliError::io(format!("cannot write report into {}", dir.display())))?;
    emit(cfg, &report, || report.to_markdown(), out)?;
    Ok(EXIT_OK)
}

pub fn rewrite(cfg: &RunConfig, sample: usize, path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let store = DocStore::open(cfg.corpus_dir()?)?;
    let gateway = gateway(cfg)?;
    let result = eval::build_rewrite_dataset(&store, sample, &gateway, cfg.seed)?;
    write_jsonl(path, &result.records)?;
    writeln!(out, "{} records written to {} ({} failed)", result.records.len(), path.display(), result.failed.len())
        .map_err(CliError::io("stdout"))?;
    Ok(EXIT_OK)
}
