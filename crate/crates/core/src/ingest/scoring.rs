use thiserror::Error;

use super::log::ResponsePayload;
use super::problem::{QuestionRecord, ResponseType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("question {question_id}: {response_type} cannot be scored against a {got} response")]
    TypeMismatch {
        question_id: String,
        response_type: ResponseType,
        got: &'static str,
    },
    #[error("drag and drop question {0} has no platform correctness flag")]
    UnscorableDragAndDrop(String),
}

/// Case-insensitive, whitespace-trimmed form used for short-answer comparison.
pub fn normalize_answer(text: &str) -> String {
    text.trim().to_lowercase()
}

/// Scores a response. No partial credit: checkbox sets must match exactly.
pub fn score_response(
    question: &QuestionRecord,
    response: &ResponsePayload,
    platform_correct: Option<bool>,
) -> Result<bool, ScoreError> {
    let mismatch = |got| ScoreError::TypeMismatch {
        question_id: question.question_id.clone(),
        response_type: question.response_type,
        got,
    };
    match (question.response_type, response) {
        (ResponseType::DragAndDrop, _) => platform_correct
            .ok_or_else(|| ScoreError::UnscorableDragAndDrop(question.question_id.clone())),
        (ResponseType::MultipleChoice | ResponseType::Dropdown, ResponsePayload::Choices(sel)) => {
            Ok(sel.len() == 1 && question.correct_choices == [sel[0]])
        }
        (ResponseType::Checkbox, ResponsePayload::Choices(sel)) => {
            let mut sel = sel.clone();
            sel.sort_unstable();
            sel.dedup();
            Ok(sel == question.correct_choices)
        }
        (ResponseType::ShortAnswer, ResponsePayload::Text(text)) => {
            let given = normalize_answer(text);
            Ok(question
                .accepted_answers
                .iter()
                .any(|a| normalize_answer(a) == given))
        }
        (ResponseType::ShortAnswer, ResponsePayload::Choices(_)) => Err(mismatch("choice")),
        (_, ResponsePayload::Text(_)) => Err(mismatch("text")),
    }
}
