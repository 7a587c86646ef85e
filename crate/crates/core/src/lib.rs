//! Identify persistently challenging quiz topics from first-attempt assessment data
//! and assemble grounded prompts for characterizing student misconceptions.

pub mod consensus;
pub mod corpus;
pub mod difficulty;
pub mod ingest;
pub mod irt;
pub mod llm;
pub mod report;
pub mod synth;
#[cfg(test)]
mod testdata;

pub use corpus::{load_manifest, normalize_topic, CohortSpec, CourseManifest, QuizSpec, TopicId};
pub use ingest::{
    derive_first_attempts, parse_event_log, parse_problem_xml, score_response, AttemptEvent,
    FirstAttemptTable, QuestionBank, QuestionRecord, ResponsePayload, ResponseType,
};
pub use llm::{
    build_misconception_prompt, build_synopsis_prompt, complete_structured, compute_cost,
    run_batch, LlmError, MockProvider, PromptBundle, Provider, RetryPolicy, UsageLedger,
};
pub use report::{assemble_report, render_markdown, CourseReport, ReportError, ReportFormat};
pub use synth::{fixture_course, generate_rasch_responses, write_course, SynthConfig, SynthCourse};
