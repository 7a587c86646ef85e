//! Classical (CTT) first-attempt difficulty, per-cohort rankings, and modal distractors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{QuizSpec, TopicId};
use crate::ingest::{
    normalize_answer, score_response, FirstAttemptTable, QuestionRecord, ResponsePayload,
    ResponseType,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DifficultyError {
    #[error("question {0} has no first attempts")]
    NoAttempts(String),
    #[error("quiz {0} has no question with attempts")]
    EmptyQuiz(String),
    #[error("question {0} has no incorrect first attempts")]
    NoIncorrectAttempts(String),
    #[error("question {0} is drag and drop and excluded from misconception analysis")]
    ExcludedType(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionStat {
    pub question_id: String,
    pub n_first_attempts: u64,
    pub n_correct: u64,
    pub p_correct: f64,
}

/// Counts first attempts on one question.
pub fn question_difficulty(
    first_attempts: &FirstAttemptTable,
    question_id: &str,
) -> Result<QuestionStat, DifficultyError> {
    let (n, correct) = first_attempts
        .for_question(question_id)
        .fold((0u64, 0u64), |(n, c), fa| {
            (n + 1, c + u64::from(fa.correct))
        });
    if n == 0 {
        return Err(DifficultyError::NoAttempts(question_id.to_string()));
    }
    Ok(QuestionStat {
        question_id: question_id.to_string(),
        n_first_attempts: n,
        n_correct: correct,
        p_correct: correct as f64 / n as f64,
    })
}

/// How question proportions combine into a quiz score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Unweighted mean of per-question proportions.
    #[default]
    PerQuestion,
    /// Correct first attempts over all first attempts in the quiz.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizDifficulty {
    pub quiz_id: String,
    pub topic: TopicId,
    pub mean_p_correct: f64,
    pub n_questions_scored: usize,
    pub n_attempts_total: u64,
    /// Member questions with zero first attempts, excluded from the mean.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unscored_questions: Vec<String>,
}

/// Aggregates member question stats. Questions absent from `stats` count as unattempted.
pub fn quiz_difficulty(
    stats: &[QuestionStat],
    quiz: &QuizSpec,
    topic: TopicId,
    mode: AveragingMode,
) -> Result<QuizDifficulty, DifficultyError> {
    let by_id: BTreeMap<&str, &QuestionStat> =
        stats.iter().map(|s| (s.question_id.as_str(), s)).collect();
    let mut members = Vec::new();
    let mut unscored = Vec::new();
    for qid in &quiz.question_ids {
        match by_id.get(qid.as_str()) {
            Some(s) if s.n_first_attempts > 0 => members.push(*s),
            _ => unscored.push(qid.clone()),
        }
    }
    if members.is_empty() {
        return Err(DifficultyError::EmptyQuiz(quiz.quiz_id.clone()));
    }
    let n_attempts_total: u64 = members.iter().map(|s| s.n_first_attempts).sum();
    let mean_p_correct = match mode {
        AveragingMode::PerQuestion => {
            members.iter().map(|s| s.p_correct).sum::<f64>() / members.len() as f64
        }
        AveragingMode::Pooled => {
            members.iter().map(|s| s.n_correct).sum::<u64>() as f64 / n_attempts_total as f64
        }
    };
    Ok(QuizDifficulty {
        quiz_id: quiz.quiz_id.clone(),
        topic,
        mean_p_correct,
        n_questions_scored: members.len(),
        n_attempts_total,
        unscored_questions: unscored,
    })
}

/// Quizzes hardest-first for one cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRanking {
    pub cohort_label: String,
    pub k: usize,
    /// Every quiz, ascending mean_p_correct, ties by quiz_id.
    pub ranked: Vec<QuizDifficulty>,
}

impl CohortRanking {
    pub fn top_k(&self) -> &[QuizDifficulty] {
        &self.ranked[..self.k.min(self.ranked.len())]
    }
}

fn ranking_order(a: &QuizDifficulty, b: &QuizDifficulty) -> std::cmp::Ordering {
    a.mean_p_correct
        .total_cmp(&b.mean_p_correct)
        .then_with(|| a.quiz_id.cmp(&b.quiz_id))
}

/// Sorts ascending by mean score; `k` must be at least 1.
pub fn rank_quizzes(
    cohort_label: impl Into<String>,
    mut quiz_difficulties: Vec<QuizDifficulty>,
    k: usize,
) -> CohortRanking {
    assert!(k >= 1, "top-k needs k >= 1");
    quiz_difficulties.sort_by(ranking_order);
    CohortRanking {
        cohort_label: cohort_label.into(),
        k,
        ranked: quiz_difficulties,
    }
}

/// Modal incorrect first-attempt response for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MostCommonIncorrect {
    pub question_id: String,
    pub payload: ResponsePayload,
    pub count: u64,
    pub n_incorrect_total: u64,
}

/// Checkbox responses count as whole sets; short answers by normalized text.
/// Frequency ties go to the lexicographically smallest index list, then text.
pub fn most_common_incorrect(
    first_attempts: &FirstAttemptTable,
    question: &QuestionRecord,
) -> Result<MostCommonIncorrect, DifficultyError> {
    if question.response_type == ResponseType::DragAndDrop {
        return Err(DifficultyError::ExcludedType(question.question_id.clone()));
    }
    let mut counts: BTreeMap<ResponsePayload, u64> = BTreeMap::new();
    let mut total = 0;
    for fa in first_attempts.for_question(&question.question_id) {
        if fa.correct {
            continue;
        }
        let key = match &fa.event.response {
            ResponsePayload::Choices(v) => ResponsePayload::choice_set(v.iter().copied()),
            ResponsePayload::Text(t) => ResponsePayload::Text(normalize_answer(t)),
        };
        // Normalization must not turn a wrong answer into a right one.
        if score_response(question, &key, None).unwrap_or(false) {
            continue;
        }
        *counts.entry(key).or_default() += 1;
        total += 1;
    }
    // BTreeMap order is the tie-break order; keep the first maximum.
    let (payload, count) = counts
        .into_iter()
        .fold(None::<(ResponsePayload, u64)>, |best, (p, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((p, c)),
        })
        .ok_or_else(|| DifficultyError::NoIncorrectAttempts(question.question_id.clone()))?;
    Ok(MostCommonIncorrect {
        question_id: question.question_id.clone(),
        payload,
        count,
        n_incorrect_total: total,
    })
}

/// Percentage of questions per type, rounded half-up to one decimal.
pub fn type_breakdown<'a>(
    questions: impl IntoIterator<Item = &'a QuestionRecord>,
) -> BTreeMap<ResponseType, f64> {
    let mut counts: BTreeMap<ResponseType, u64> = BTreeMap::new();
    let mut total = 0u64;
    for q in questions {
        *counts.entry(q.response_type).or_default() += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(t, c)| {
            // Integer rounding of c * 1000 / total to the nearest tenth of a percent.
            let tenths = (2 * c * 1000 + total) / (2 * total);
            (t, tenths as f64 / 10.0)
        })
        .collect()
}

/// Serialized ranking entry; scores rounded to four decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub rank: usize,
    pub quiz_id: String,
    pub topic: TopicId,
    pub mean_p_correct: f64,
    pub n_questions: usize,
    pub n_attempts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingFile {
    pub cohort_label: String,
    pub k: usize,
    pub entries: Vec<RankingEntry>,
}

pub fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

impl From<&CohortRanking> for RankingFile {
    fn from(r: &CohortRanking) -> Self {
        RankingFile {
            cohort_label: r.cohort_label.clone(),
            k: r.k,
            entries: r
                .ranked
                .iter()
                .enumerate()
                .map(|(i, q)| RankingEntry {
                    rank: i + 1,
                    quiz_id: q.quiz_id.clone(),
                    topic: q.topic.clone(),
                    mean_p_correct: round_to(q.mean_p_correct, 4),
                    n_questions: q.n_questions_scored,
                    n_attempts: q.n_attempts_total,
                })
                .collect(),
        }
    }
}
