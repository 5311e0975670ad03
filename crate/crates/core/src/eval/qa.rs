//! Two-answer QA judging with detection-driven regeneration.
//!
//! The model first picks between the right and the hallucinated answer. Its
//! reasoning is fact-checked claim by claim; while any claim is nonfactual, the
//! model is re-asked with the flagged passages and their evidence.

use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

use super::dataset::QaPairRecord;
use crate::llm::{Bindings, GenerationRequest, JUDGE_QA, REGENERATE};
use crate::pipeline::{AnnotatedResponse, Ceg, PipelineError, RegenTask, RoundRecord};
use crate::verify::{Label, VerifyError};

static CHOICE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)answer\s*([12])").unwrap());

const REASONING_TAG: &str = "#Reasoning#:";
const CHOICE_TAG: &str = "#Choice#:";

/// Text after `#Choice#:`, or the whole output when the tag is missing.
pub fn choice_section(output: &str) -> &str {
    output.find(CHOICE_TAG).map_or(output, |i| &output[i + CHOICE_TAG.len()..]).trim()
}

/// Text between `#Reasoning#:` and `#Choice#:`, falling back to everything before the choice.
pub fn reasoning_section(output: &str) -> &str {
    let end = output.find(CHOICE_TAG).unwrap_or(output.len());
    let head = &output[..end];
    head.find(REASONING_TAG).map_or(head, |i| &head[i + REASONING_TAG.len()..]).trim()
}

/// First `Answer 1` / `Answer 2` token (case-insensitive) in the choice section.
pub fn parse_choice(output: &str) -> Result<u8, VerifyError> {
    CHOICE
        .captures(choice_section(output))
        .map(|c| if &c[1] == "1" { 1 } else { 2 })
        .ok_or_else(|| VerifyError::Unparseable(output.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct QaJudgement {
    /// 1 = right answer, 2 = hallucinated answer.
    pub choice: u8,
    pub correct: bool,
    pub run: AnnotatedResponse,
}

pub fn judge_qa_pair(ceg: &Ceg, record: &QaPairRecord) -> Result<QaJudgement, PipelineError> {
    let answers: Bindings = [
        ("answer_1".to_string(), record.right_answer.clone()),
        ("answer_2".to_string(), record.hallucinated_answer.clone()),
    ]
    .into();
    let mut first = answers.clone();
    first.insert("question".into(), record.question.clone());
    let cfg = ceg.config();
    let reasoning = |s: &str| reasoning_section(s).to_string();
    let task = RegenTask {
        question: &record.question,
        initial_request: GenerationRequest::template(JUDGE_QA, first)
            .with_temperature(cfg.temperature)
            .with_max_attempts(cfg.generation_attempts),
        regen_template: REGENERATE,
        extra_bindings: answers,
        checked_text: &reasoning,
    };
    let run = ceg.run_task(&task, None)?;
    if let Some(err) = &run.error {
        return Err(PipelineError::Verify(VerifyError::Unparseable(format!(
            "QA run ended without a final answer: {err}"
        ))));
    }
    let choice = parse_choice(&run.final_text)?;
    Ok(QaJudgement { choice, correct: choice == 1, run })
}

fn render_round_details(out: &mut Vec<String>, round: &RoundRecord) {
    let segments: Vec<String> =
        round.claims.iter().enumerate().map(|(i, c)| format!("{}.{}", i + 1, c.claim.text)).collect();
    out.push(format!("#Segments#: {}", segments.join(" ")));
    let flags: Vec<&str> =
        round.claims.iter().map(|c| if c.verdict.label == Label::Factual { "1" } else { "0" }).collect();
    out.push(format!("#NLI Results#: [{}]", flags.join(",")));
    for (i, c) in round.claims.iter().enumerate() {
        let docs: Vec<String> = c.evidence.iter().map(|d| format!("{} {}", d.source_title, d.text)).collect();
        out.push(format!("#Doc Retrieved for Segment{}#: {}", i + 1, docs.join(" ")));
    }
}

/// Case-study trace: the pair, then each round's reasoning and choice; rounds
/// with nonfactual segments also list the segments, their 1/0 NLI flags and the
/// retrieved docs.
pub fn render_trace(record: &QaPairRecord, run: &AnnotatedResponse) -> String {
    let mut out = vec![
        format!("#Question#: {}", record.question),
        format!("#Right_Answer#: {}", record.right_answer),
        format!("#Hallucinated_Answer#: {}", record.hallucinated_answer),
    ];
    for (i, round) in run.rounds.iter().enumerate() {
        out.push(format!("#Reasoning{}#: {}", i + 1, reasoning_section(&round.response)));
        out.push(format!("#Choice{}#: {}", i + 1, choice_section(&round.response)));
        if !round.all_factual() {
            render_round_details(&mut out, round);
        }
    }
    out.join("\n") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choice_parsing() {
        assert_eq!(parse_choice("#Reasoning#: x\n#Choice#: Answer 1: Foo").unwrap(), 1);
        assert_eq!(parse_choice("I pick answer 2").unwrap(), 2);
        assert_eq!(parse_choice("#Reasoning#: Answer 1 is wrong\n#Choice#:ANSWER 2").unwrap(), 2);
        assert!(parse_choice("#Choice#: neither").is_err());
    }

    #[test]
    fn sections() {
        let out = "#Reasoning#: because.\n#Choice#: Answer 2: X";
        assert_eq!(reasoning_section(out), "because.");
        assert_eq!(choice_section(out), "Answer 2: X");
        assert_eq!(reasoning_section("plain"), "plain");
    }
}
