//! Prompt templates with `{name}` placeholders.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

pub type Bindings = BTreeMap<String, String>;

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").unwrap());

pub const NLI_WITH_DOCS: &str = "nli_with_docs";
pub const NLI_NO_DOCS: &str = "nli_no_docs";
pub const REGENERATE: &str = "regenerate";
pub const REGENERATE_OPEN: &str = "regenerate_open";
pub const JUDGE_QA: &str = "judge_qa";
pub const NLI_PREMISE_HYPOTHESIS: &str = "nli_premise_hypothesis";
pub const REWRITE_PASSAGE: &str = "rewrite_passage";

const BUILTIN: &[(&str, &str)] = &[
    (NLI_WITH_DOCS, include_str!("../../prompts/nli_with_docs.txt")),
    (NLI_NO_DOCS, include_str!("../../prompts/nli_no_docs.txt")),
    (REGENERATE, include_str!("../../prompts/regenerate.txt")),
    (REGENERATE_OPEN, include_str!("../../prompts/regenerate_open.txt")),
    (JUDGE_QA, include_str!("../../prompts/judge_qa.txt")),
    (NLI_PREMISE_HYPOTHESIS, include_str!("../../prompts/nli_premise_hypothesis.txt")),
    (REWRITE_PASSAGE, include_str!("../../prompts/rewrite_passage.txt")),
];

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template}` is missing bindings for: {}", .missing.join(", "))]
    Missing { template: String, missing: Vec<String> },
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("prompt for `{template}` needs {needed} characters, budget is {budget}")]
    OverBudget { template: String, needed: usize, budget: usize },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    required: BTreeSet<String>,
}

impl PromptTemplate {
    /// One trailing newline (as left by text editors) is dropped from `body`.
    pub fn new(name: impl Into<String>, body: &str) -> Self {
        let body = body.strip_suffix('\n').unwrap_or(body).to_string();
        let required = PLACEHOLDER.captures_iter(&body).map(|c| c[1].to_string()).collect();
        PromptTemplate { name: name.into(), body, required }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_placeholders(&self) -> &BTreeSet<String> {
        &self.required
    }

    /// Single-pass substitution; bound values are inserted verbatim and never rescanned.
    pub fn render(&self, bindings: &Bindings) -> Result<String, TemplateError> {
        let missing: Vec<String> = self.required.iter().filter(|p| !bindings.contains_key(*p)).cloned().collect();
        if !missing.is_empty() {
            return Err(TemplateError::Missing { template: self.name.clone(), missing });
        }
        Ok(PLACEHOLDER.replace_all(&self.body, |c: &regex::Captures<'_>| bindings[&c[1]].clone()).into_owned())
    }
}

/// Named templates: the built-in set, optionally overridden from a directory.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN.iter().map(|&(n, b)| (n.to_string(), PromptTemplate::new(n, b))).collect();
        TemplateSet { templates }
    }

    /// Built-ins overlaid with every `<name>.txt` (or extensionless `<name>`) file in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let io = |source| TemplateError::Io { path: dir.display().to_string(), source };
        let mut set = Self::builtin();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if !path.is_file() {
                continue;
            }
            let ext = path.extension().and_then(|e| e.to_str());
            if !matches!(ext, None | Some("txt")) {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let body = std::fs::read_to_string(&path)
                .map_err(|source| TemplateError::Io { path: path.display().to_string(), source })?;
            set.insert(PromptTemplate::new(name, &body));
        }
        Ok(set)
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.name.clone(), template);
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates.get(name).ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Numbered block (`1. first\n2. second`) bound to `{docs}` and `{nonfactual_segments}`.
pub fn numbered_block<S: AsRef<str>>(items: &[S]) -> String {
    items.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s.as_ref())).collect::<Vec<_>>().join("\n")
}
