//! Instructor-facing course reports and the expert rating worksheet.

mod markdown;
pub mod rubric;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{
    ConsensusParams, ConsensusReport, ConsensusSummary, PersistentTopic, SupportGrid,
};
use crate::difficulty::MostCommonIncorrect;
use crate::ingest::{QuestionBank, QuestionRecord, ResponseType};
use crate::irt::ValidationReport;
use crate::llm::{
    compute_cost, CostReport, LlmError, MisconceptionResult, SynopsisResult, UsageLedger,
};

pub use markdown::render_markdown;
pub use rubric::{
    import_worksheet, rubric_instructions, rubric_worksheet, write_worksheet, Rating,
    RatingSummary, RubricWorksheet, Subcode, WorksheetRow,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("report inputs are incomplete: {}", .0.join("; "))]
    IncompleteInputs(Vec<String>),
    #[error("cost accounting failed: {0}")]
    Cost(#[from] LlmError),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("worksheet line {line}: {message}")]
    Worksheet { line: usize, message: String },
}

/// What the misconception stage produced for one eligible question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MisconceptionOutcome {
    Completed {
        top_incorrect: MostCommonIncorrect,
        result: MisconceptionResult,
    },
    /// Provider or validation error.
    Failed {
        top_incorrect: Option<MostCommonIncorrect>,
        error: String,
    },
    /// Not sent to the provider, e.g. no incorrect first attempts.
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionEntry {
    pub question: QuestionRecord,
    pub top_incorrect: MostCommonIncorrect,
    pub misconceptions: MisconceptionResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionFailure {
    pub question_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub question_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSection {
    pub topic: PersistentTopic,
    pub synopsis: SynopsisResult,
    pub questions: Vec<QuestionEntry>,
    pub failures: Vec<QuestionFailure>,
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseReport {
    pub course_type: String,
    pub params: ConsensusParams,
    pub summary: ConsensusSummary,
    pub grid: SupportGrid,
    pub topics: Vec<TopicSection>,
    #[serde(default)]
    pub validation: Option<ValidationReport>,
    pub usage: CostReport,
}

impl CourseReport {
    pub fn question_count(&self) -> usize {
        self.topics.iter().map(|t| t.questions.len()).sum()
    }

    pub fn failure_count(&self) -> usize {
        self.topics.iter().map(|t| t.failures.len()).sum()
    }

    pub fn exclusion_count(&self) -> usize {
        self.topics.iter().map(|t| t.exclusions.len()).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&TopicSection, &QuestionEntry)> {
        self.topics
            .iter()
            .flat_map(|t| t.questions.iter().map(move |q| (t, q)))
    }
}

/// Joins the pipeline outputs. Every question of every persistent topic ends up as
/// an entry, a failure, or an exclusion; anything unaccounted for is an error.
pub fn assemble_report(
    consensus: &ConsensusReport,
    synopses: &BTreeMap<String, SynopsisResult>,
    questions: &QuestionBank,
    misconceptions: &BTreeMap<String, MisconceptionOutcome>,
    validation: Option<&ValidationReport>,
    ledger: &UsageLedger,
) -> Result<CourseReport, ReportError> {
    let mut missing = Vec::new();
    let mut topics = Vec::with_capacity(consensus.topics.len());
    for topic in &consensus.topics {
        let title = topic.topic.as_str();
        let synopsis = synopses.get(title);
        if synopsis.is_none() {
            missing.push(format!("synopsis for topic {title:?}"));
        }
        let mut section = TopicSection {
            topic: topic.clone(),
            synopsis: synopsis.cloned().unwrap_or(SynopsisResult {
                bullets: Vec::new(),
                raw: String::new(),
            }),
            questions: Vec::new(),
            failures: Vec::new(),
            exclusions: Vec::new(),
        };
        for qid in &topic.question_ids {
            let Some(question) = questions.get(qid) else {
                missing.push(format!("question record {qid}"));
                continue;
            };
            if question.response_type == ResponseType::DragAndDrop {
                section.exclusions.push(Exclusion {
                    question_id: qid.clone(),
                    reason: "drag and drop questions are excluded from misconception analysis"
                        .into(),
                });
                continue;
            }
            match misconceptions.get(qid) {
                None => missing.push(format!("misconception result for question {qid}")),
                Some(MisconceptionOutcome::Completed {
                    top_incorrect,
                    result,
                }) => section.questions.push(QuestionEntry {
                    question: question.clone(),
                    top_incorrect: top_incorrect.clone(),
                    misconceptions: result.clone(),
                }),
                Some(MisconceptionOutcome::Failed { error, .. }) => {
                    section.failures.push(QuestionFailure {
                        question_id: qid.clone(),
                        error: error.clone(),
                    })
                }
                Some(MisconceptionOutcome::Skipped { reason }) => {
                    section.exclusions.push(Exclusion {
                        question_id: qid.clone(),
                        reason: reason.clone(),
                    })
                }
            }
        }
        topics.push(section);
    }
    if !missing.is_empty() {
        return Err(ReportError::IncompleteInputs(missing));
    }
    Ok(CourseReport {
        course_type: consensus.course_type.clone(),
        params: consensus.params,
        summary: consensus.summary,
        grid: consensus.grid.clone(),
        topics,
        validation: validation.cloned(),
        usage: compute_cost(ledger)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Json,
}

pub fn to_json(report: &CourseReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn from_json(text: &str) -> Result<CourseReport, ReportError> {
    serde_json::from_str(text).map_err(|e| ReportError::Io(format!("report JSON: {e}")))
}

pub fn emit_report(
    report: &CourseReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<(), ReportError> {
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Json => to_json(report),
    };
    std::fs::write(path, body).map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))
}
