//! Markdown renderings for terminal reading.

use std::fmt::Write as _;

use ceg_core::AnnotatedResponse;

use crate::commands::RetrieveOutput;

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

pub fn annotated_markdown(r: &AnnotatedResponse) -> String {
    let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    let mut md = String::from("# Annotated response\n\n");
    let _ = writeln!(md, "- Question: {}", r.question);
    let _ = writeln!(md, "- Status: {status}");
    let _ = writeln!(md, "- Rounds: {}", r.rounds.len());
    if let Some(err) = &r.error {
        let _ = writeln!(md, "- Error: {err}");
    }
    let Some(last) = r.rounds.last() else { return md };
    let _ = write!(md, "\n## Response\n\n{}\n", last.annotated_text);
    if !last.claims.is_empty() {
        md.push_str("\n## Claims\n\n| # | label | citations | claim |\n|---|---|---|---|\n");
        for c in &last.claims {
            let cites: Vec<String> = c.verdict.cited_doc_ids.iter().map(u64::to_string).collect();
            let _ = writeln!(md, "| {} | {:?} | {} | {} |", c.claim.index, c.verdict.label, cites.join(", "), cell(&c.claim.text));
        }
    }
    md
}

pub fn retrieval_markdown(r: &RetrieveOutput) -> String {
    let mut md = format!("# Retrieval\n\n- Query: {}\n- k: {}\n- threshold: {}\n\n", r.query, r.k, r.threshold);
    md.push_str("| rank | doc | score | title | text |\n|---|---|---|---|---|\n");
    for (i, d) in r.docs.iter().enumerate() {
        let _ = writeln!(md, "| {} | {} | {:.4} | {} | {} |", i + 1, d.doc_id, d.score, cell(&d.source_title), cell(&d.text));
    }
    md
}
