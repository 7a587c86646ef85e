//! Seeded synthetic courses with known ground truth.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64`. Uniforms are
//! `(next_u64 >> 11) * 2^-53`; normals use Box-Muller on two uniforms, keeping the
//! cosine branch. Draw order is part of the contract and is documented on each
//! generator, so the same streams can be reproduced elsewhere.

pub mod course;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::LogLine;
use crate::ingest::{QuestionRecord, ResponsePayload, ResponseType};
use crate::irt::{logistic, ResponseMatrix};

pub use course::{
    fixture_course, question_xml, write_course, CohortTruth, CourseLayout, CourseQuiz, SynthCohort,
    SynthCourse, FIXTURE_COURSES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("unknown quiz id {0}")]
    UnknownQuizId(String),
    #[error("I/O error: {0}")]
    Io(String),
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on [0, 1) with 53 bits.
pub fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal from two uniforms.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = 1.0 - unit(rng);
    let u2 = unit(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform integer in 0..n by rejection-free multiply-shift; n must be > 0.
pub fn below(rng: &mut impl RngCore, n: u64) -> u64 {
    ((rng.next_u64() as u128 * n as u128) >> 64) as u64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    #[default]
    MultipleChoice,
    Checkbox,
    Dropdown,
    ShortAnswer,
}

impl SynthKind {
    pub fn response_type(self) -> ResponseType {
        match self {
            SynthKind::MultipleChoice => ResponseType::MultipleChoice,
            SynthKind::Checkbox => ResponseType::Checkbox,
            SynthKind::Dropdown => ResponseType::Dropdown,
            SynthKind::ShortAnswer => ResponseType::ShortAnswer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthQuiz {
    pub quiz_id: String,
    /// One entry per question; the question count is its length.
    pub true_b: Vec<f64>,
    /// Cycled over the quiz's questions.
    #[serde(default = "default_kinds")]
    pub kinds: Vec<SynthKind>,
}

fn default_kinds() -> Vec<SynthKind> {
    vec![SynthKind::MultipleChoice]
}

impl SynthQuiz {
    pub fn new(quiz_id: impl Into<String>, true_b: Vec<f64>) -> Self {
        SynthQuiz {
            quiz_id: quiz_id.into(),
            true_b,
            kinds: default_kinds(),
        }
    }

    pub fn n_questions(&self) -> usize {
        self.true_b.len()
    }

    pub fn question_id(&self, j: usize) -> String {
        format!("{}_q{:02}", self.quiz_id, j + 1)
    }

    pub fn kind(&self, j: usize) -> SynthKind {
        self.kinds[j % self.kinds.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_students: usize,
    pub quizzes: Vec<SynthQuiz>,
    /// Probability that an observed cell gets a second logged attempt.
    pub attempt_noise: f64,
    /// Probability that a student skips a question.
    pub missingness: f64,
    /// Course run written into log lines; student ids are prefixed with it.
    pub run_label: String,
    /// Quizzes shifted by [`plant_challenging_topics`].
    #[serde(default)]
    pub planted: BTreeSet<String>,
}

impl SynthConfig {
    /// `n_quizzes` quizzes of `questions_per_quiz` items with b drawn N(0, 1) from
    /// stream 1 of `seed` (responses use stream 0).
    pub fn standard(
        seed: u64,
        n_students: usize,
        n_quizzes: usize,
        questions_per_quiz: usize,
    ) -> Self {
        let mut r = rng(seed);
        r.set_stream(1);
        let quizzes = (0..n_quizzes)
            .map(|q| {
                let b = (0..questions_per_quiz)
                    .map(|_| standard_normal(&mut r))
                    .collect();
                SynthQuiz::new(format!("quiz{:02}", q + 1), b)
            })
            .collect();
        SynthConfig {
            seed,
            n_students,
            quizzes,
            attempt_noise: 0.0,
            missingness: 0.0,
            run_label: "run1".into(),
            planted: BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_students == 0 {
            return bad("n_students must be at least 1".into());
        }
        for (name, p) in [
            ("attempt_noise", self.attempt_noise),
            ("missingness", self.missingness),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        let mut seen = BTreeSet::new();
        for q in &self.quizzes {
            if q.true_b.is_empty() {
                return bad(format!("quiz {} has no questions", q.quiz_id));
            }
            if q.kinds.is_empty() {
                return bad(format!("quiz {} has an empty kinds list", q.quiz_id));
            }
            if q.true_b.iter().any(|b| !b.is_finite()) {
                return bad(format!("quiz {} has a non-finite difficulty", q.quiz_id));
            }
            if !seen.insert(&q.quiz_id) {
                return bad(format!("duplicate quiz id {}", q.quiz_id));
            }
        }
        Ok(())
    }

    /// The same items for another cohort: seed + index, own run label.
    pub fn for_cohort(&self, index: usize, run_label: &str) -> Self {
        SynthConfig {
            seed: self.seed.wrapping_add(index as u64),
            run_label: run_label.to_string(),
            ..self.clone()
        }
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.quizzes
            .iter()
            .flat_map(|q| (0..q.n_questions()).map(move |j| q.question_id(j)))
            .collect()
    }

    pub fn student_ids(&self) -> Vec<String> {
        (0..self.n_students)
            .map(|s| format!("{}-s{:04}", self.run_label, s + 1))
            .collect()
    }

    fn items(&self) -> Vec<(String, f64, SynthKind)> {
        self.quizzes
            .iter()
            .flat_map(|q| {
                (0..q.n_questions()).map(move |j| (q.question_id(j), q.true_b[j], q.kind(j)))
            })
            .collect()
    }
}

/// Adds `delta_b` to every item of the planted quizzes. Zero is allowed as a null effect.
pub fn plant_challenging_topics<S: AsRef<str>>(
    base: &SynthConfig,
    planted: &[S],
    delta_b: f64,
) -> Result<SynthConfig, SynthError> {
    if !(delta_b >= 0.0) || !delta_b.is_finite() {
        return Err(SynthError::InvalidConfig(format!(
            "delta_b must be >= 0, got {delta_b}"
        )));
    }
    let mut config = base.clone();
    for id in planted {
        let id = id.as_ref();
        let quiz = config
            .quizzes
            .iter_mut()
            .find(|q| q.quiz_id == id)
            .ok_or_else(|| SynthError::UnknownQuizId(id.to_string()))?;
        if config.planted.insert(id.to_string()) {
            for b in &mut quiz.true_b {
                *b += delta_b;
            }
        }
    }
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthAttempt {
    pub response: ResponsePayload,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_b: BTreeMap<String, f64>,
    pub true_theta: BTreeMap<String, f64>,
    /// Planted quizzes, or the quiz with the highest mean b when nothing was planted.
    pub hardest_quiz_ids: Vec<String>,
    /// student -> question -> correctness of the generated first attempt.
    pub correct: BTreeMap<String, BTreeMap<String, bool>>,
    /// Filled in by [`generate_event_log`].
    #[serde(default)]
    pub first_attempts: BTreeMap<String, BTreeMap<String, TruthAttempt>>,
}

/// Draw order: one normal per student for theta (students in order), then per
/// student, per item in manifest order, a missingness uniform and a response uniform.
pub fn generate_rasch_responses(
    config: &SynthConfig,
) -> Result<(ResponseMatrix, GroundTruth), SynthError> {
    config.validate()?;
    let mut r = rng(config.seed);
    let students = config.student_ids();
    let items = config.items();
    let theta: Vec<f64> = (0..students.len())
        .map(|_| standard_normal(&mut r))
        .collect();
    let mut cells = Vec::with_capacity(students.len() * items.len());
    let mut correct: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();
    for (s, sid) in students.iter().enumerate() {
        for (qid, b, _) in &items {
            let skip = unit(&mut r) < config.missingness;
            let right = unit(&mut r) < logistic(theta[s] - b);
            if skip {
                cells.push(None);
            } else {
                cells.push(Some(right));
                correct
                    .entry(sid.clone())
                    .or_default()
                    .insert(qid.clone(), right);
            }
        }
    }
    let hardest_quiz_ids = if config.planted.is_empty() {
        config
            .quizzes
            .iter()
            .map(|q| {
                (
                    q.true_b.iter().sum::<f64>() / q.n_questions() as f64,
                    &q.quiz_id,
                )
            })
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
            .map(|(_, id)| vec![id.clone()])
            .unwrap_or_default()
    } else {
        config.planted.iter().cloned().collect()
    };
    let truth = GroundTruth {
        true_b: items.iter().map(|(id, b, _)| (id.clone(), *b)).collect(),
        true_theta: students.iter().cloned().zip(theta).collect(),
        hardest_quiz_ids,
        correct,
        first_attempts: BTreeMap::new(),
    };
    let item_ids = items.into_iter().map(|(id, _, _)| id).collect();
    Ok((ResponseMatrix::new(students, item_ids, cells), truth))
}

/// Four choices; the correct index rotates with the question number.
pub fn synthetic_question(quiz: &SynthQuiz, j: usize) -> QuestionRecord {
    let qid = quiz.question_id(j);
    let kind = quiz.kind(j);
    let choices: Vec<String> = (0..4)
        .map(|c| format!("Option {} for {qid}", (b'A' + c) as char))
        .collect();
    let stem = format!(
        "Which statement about {} is correct (item {})?",
        quiz.quiz_id,
        j + 1
    );
    let explanation = format!(
        "The keyed answer follows from the lecture on {}.",
        quiz.quiz_id
    );
    let result = match kind {
        SynthKind::ShortAnswer => QuestionRecord::new(
            &qid,
            format!("Name the concept tested by {qid}."),
            ResponseType::ShortAnswer,
            vec![],
            vec![],
            vec![format!("answer {}", j + 1)],
            explanation,
        ),
        SynthKind::Checkbox => QuestionRecord::new(
            &qid,
            stem,
            ResponseType::Checkbox,
            choices,
            vec![j % 4, (j + 2) % 4],
            vec![],
            explanation,
        ),
        SynthKind::MultipleChoice | SynthKind::Dropdown => QuestionRecord::new(
            &qid,
            stem,
            kind.response_type(),
            choices,
            vec![j % 4],
            vec![],
            explanation,
        ),
    };
    result.expect("synthetic questions are well formed")
}

/// One response uniform picks the payload. Incorrect answers favour one distractor
/// (probability 0.6) so every question has a clear modal wrong answer.
fn draw_response(q: &QuestionRecord, correct: bool, r: &mut ChaCha8Rng) -> ResponsePayload {
    let u = unit(r);
    match q.response_type {
        ResponseType::ShortAnswer => {
            let accepted = &q.accepted_answers[0];
            if correct {
                // Case and padding variants must still score correct.
                match (u * 3.0) as u32 {
                    0 => ResponsePayload::Text(accepted.clone()),
                    1 => ResponsePayload::Text(accepted.to_uppercase()),
                    _ => ResponsePayload::Text(format!("  {accepted} ")),
                }
            } else if u < 0.6 {
                ResponsePayload::Text("common wrong answer".into())
            } else {
                ResponsePayload::Text(format!("wrong answer {}", (u * 10.0) as u32))
            }
        }
        ResponseType::Checkbox => {
            if correct {
                return ResponsePayload::Choices(q.correct_choices.clone());
            }
            // Any of the 15 other subsets of four choices (including the empty one).
            let correct_mask: u32 = q.correct_choices.iter().map(|&i| 1 << i).sum();
            let mask = if u < 0.6 {
                correct_mask ^ 1 << q.correct_choices[0]
            } else {
                let k = ((u - 0.6) / 0.4 * 15.0) as u32;
                (0..16u32)
                    .filter(|&m| m != correct_mask)
                    .nth(k.min(14) as usize)
                    .expect("15 wrong subsets")
            };
            ResponsePayload::Choices((0..4).filter(|i| mask & (1 << i) != 0).collect())
        }
        _ => {
            let key = q.correct_choices[0];
            if correct {
                return ResponsePayload::Choices(vec![key]);
            }
            let wrong: Vec<usize> = (0..q.choices.len()).filter(|&i| i != key).collect();
            let pick = if u < 0.6 {
                wrong[0]
            } else {
                wrong[(((u - 0.6) / 0.4) * wrong.len() as f64) as usize % wrong.len()]
            };
            ResponsePayload::Choices(vec![pick])
        }
    }
}

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 8, 9, 0, 0)
        .single()
        .expect("valid base time")
}

struct PendingEvent {
    sort_key: u64,
    order: usize,
    line: LogLine,
}

/// Log lines plus the first-attempt table ingestion must recover.
///
/// Uses stream 2 of the config seed. Per observed cell in matrix order: a response
/// uniform, a millisecond offset, a file-position key; then, with probability
/// `attempt_noise`, a second attempt whose timestamp either ties the first (placed
/// later in the file) or follows it (placed anywhere). Lines are emitted sorted by
/// the position keys, so file order is shuffled.
pub fn generate_event_log(
    matrix: &ResponseMatrix,
    truth: &mut GroundTruth,
    config: &SynthConfig,
) -> Result<Vec<LogLine>, SynthError> {
    config.validate()?;
    let questions: BTreeMap<String, QuestionRecord> = config
        .quizzes
        .iter()
        .flat_map(|q| {
            (0..q.n_questions()).map(move |j| (q.question_id(j), synthetic_question(q, j)))
        })
        .collect();
    let mut r = rng(config.seed);
    r.set_stream(2);
    let mut pending = Vec::with_capacity(matrix.n_observed() * 2);
    let mut first = BTreeMap::new();
    for (s, sid) in matrix.students.iter().enumerate() {
        let day = base_time() + Duration::days((s % 60) as i64);
        for (i, qid) in matrix.items.iter().enumerate() {
            let Some(correct) = matrix.get(s, i) else {
                continue;
            };
            let q = questions.get(qid).ok_or_else(|| {
                SynthError::InvalidConfig(format!("matrix item {qid} is not in the config"))
            })?;
            let response = draw_response(q, correct, &mut r);
            let t1 = day
                + Duration::seconds((i * 90) as i64)
                + Duration::milliseconds(below(&mut r, 60_000) as i64);
            let key1 = r.next_u64() >> 1;
            pending.push(PendingEvent {
                sort_key: key1,
                order: pending.len(),
                line: LogLine::problem_check(sid, qid, t1, &config.run_label, response.clone()),
            });
            first
                .entry(sid.clone())
                .or_insert_with(BTreeMap::new)
                .insert(qid.clone(), TruthAttempt { response, correct });
            if unit(&mut r) < config.attempt_noise {
                let tie = unit(&mut r) < 0.25;
                let second_right = unit(&mut r) < 0.5;
                let response2 = draw_response(q, second_right, &mut r);
                let (t2, key2) = if tie {
                    let span = (u64::MAX >> 1) - key1;
                    (t1, key1 + 1 + below(&mut r, span.max(1)))
                } else {
                    (
                        t1 + Duration::seconds(1 + below(&mut r, 3600) as i64),
                        r.next_u64() >> 1,
                    )
                };
                pending.push(PendingEvent {
                    sort_key: key2,
                    order: pending.len(),
                    line: LogLine::problem_check(sid, qid, t2, &config.run_label, response2),
                });
            }
        }
    }
    pending.sort_by_key(|e| (e.sort_key, e.order));
    truth.first_attempts = first;
    Ok(pending.into_iter().map(|e| e.line).collect())
}
