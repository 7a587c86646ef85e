//! Cross-cohort persistence filter over per-cohort difficulty rankings.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CourseManifest, TopicId};
use crate::difficulty::CohortRanking;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("{got} cohort ranking(s) cannot reach a support of {needed}")]
    TooFewCohorts { got: usize, needed: usize },
    #[error("invalid consensus parameters: {0}")]
    InvalidParams(String),
    #[error("ranked quiz {0} is not in the manifest")]
    UnknownQuiz(String),
    #[error("quiz {quiz_id}: {message}")]
    Topic { quiz_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusParams {
    pub top_k: usize,
    pub min_cohort_support: usize,
    pub min_questions_per_quiz: usize,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            top_k: 10,
            min_cohort_support: 2,
            min_questions_per_quiz: 2,
        }
    }
}

impl ConsensusParams {
    fn check(&self, n_cohorts: usize) -> Result<(), ConsensusError> {
        if self.top_k == 0 || self.min_cohort_support == 0 || self.min_questions_per_quiz == 0 {
            return Err(ConsensusError::InvalidParams(format!(
                "all parameters must be >= 1, got {self:?}"
            )));
        }
        if n_cohorts == 0 || self.min_cohort_support > n_cohorts {
            return Err(ConsensusError::TooFewCohorts {
                got: n_cohorts,
                needed: self.min_cohort_support.max(1),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistentTopic {
    pub topic: TopicId,
    pub cohort_support: usize,
    pub supporting_cohorts: Vec<String>,
    pub quiz_ids: BTreeSet<String>,
    /// Questions of every member quiz, in manifest order.
    pub question_ids: Vec<String>,
    pub question_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportGrid {
    pub cohorts: Vec<String>,
    pub topics: Vec<TopicId>,
    /// `cells[cohort][topic]`: quizzes of that topic in that cohort's top-k.
    pub cells: Vec<Vec<usize>>,
    pub persistent: Vec<bool>,
}

impl SupportGrid {
    pub fn cell(&self, cohort: &str, topic: &str) -> Option<usize> {
        let r = self.cohorts.iter().position(|c| c == cohort)?;
        let c = self.topics.iter().position(|t| t.as_str() == topic)?;
        Some(self.cells[r][c])
    }
}

/// Identified (any cohort's top-k) vs persistent topic counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSummary {
    pub identified: usize,
    pub persistent: usize,
    /// Rounded to a whole percent.
    pub percent_persistent: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub course_type: String,
    pub params: ConsensusParams,
    pub topics: Vec<PersistentTopic>,
    pub grid: SupportGrid,
    pub summary: ConsensusSummary,
    pub notes: Vec<String>,
}

impl ConsensusReport {
    pub fn total_questions(&self) -> usize {
        self.topics.iter().map(|t| t.question_count).sum()
    }
}

pub const QUESTION_COUNT_NOTE: &str = "question_count sums the questions of every quiz of the topic that ranked in the top-k of at least one cohort";

/// Each cohort's top-k after dropping quizzes below the question minimum, as (quiz_id, topic).
fn eligible_top_k(
    rankings: &[CohortRanking],
    manifest: &CourseManifest,
    params: &ConsensusParams,
) -> Result<Vec<(String, Vec<(String, TopicId)>)>, ConsensusError> {
    rankings
        .iter()
        .map(|r| {
            let mut top = Vec::with_capacity(params.top_k);
            for entry in &r.ranked {
                if top.len() == params.top_k {
                    break;
                }
                let quiz = manifest
                    .quiz(&entry.quiz_id)
                    .ok_or_else(|| ConsensusError::UnknownQuiz(entry.quiz_id.clone()))?;
                if quiz.question_ids.len() < params.min_questions_per_quiz {
                    continue;
                }
                let topic = quiz.topic().map_err(|e| ConsensusError::Topic {
                    quiz_id: quiz.quiz_id.clone(),
                    message: e.to_string(),
                })?;
                top.push((quiz.quiz_id.clone(), topic));
            }
            Ok((r.cohort_label.clone(), top))
        })
        .collect()
}

fn grid_from(tops: &[(String, Vec<(String, TopicId)>)], min_support: usize) -> SupportGrid {
    let topics: BTreeSet<&TopicId> = tops
        .iter()
        .flat_map(|(_, t)| t.iter().map(|(_, topic)| topic))
        .collect();
    let topics: Vec<TopicId> = topics.into_iter().cloned().collect();
    let cells: Vec<Vec<usize>> = tops
        .iter()
        .map(|(_, top)| {
            topics
                .iter()
                .map(|topic| top.iter().filter(|(_, t)| t == topic).count())
                .collect()
        })
        .collect();
    let persistent = (0..topics.len())
        .map(|c| cells.iter().filter(|row| row[c] > 0).count() >= min_support)
        .collect();
    SupportGrid {
        cohorts: tops.iter().map(|(c, _)| c.clone()).collect(),
        topics,
        cells,
        persistent,
    }
}

/// Per-(cohort, topic) quiz counts over the eligible top-k, with persistence marks.
pub fn support_grid(
    rankings: &[CohortRanking],
    manifest: &CourseManifest,
    params: &ConsensusParams,
) -> Result<SupportGrid, ConsensusError> {
    let tops = eligible_top_k(rankings, manifest, params)?;
    Ok(grid_from(&tops, params.min_cohort_support))
}

/// Topics in the eligible top-k of at least `min_cohort_support` cohorts,
/// ordered by support descending, then topic name.
pub fn persistent_topics(
    rankings: &[CohortRanking],
    manifest: &CourseManifest,
    params: &ConsensusParams,
) -> Result<Vec<PersistentTopic>, ConsensusError> {
    Ok(consensus(rankings, manifest, params)?.topics)
}

pub fn consensus(
    rankings: &[CohortRanking],
    manifest: &CourseManifest,
    params: &ConsensusParams,
) -> Result<ConsensusReport, ConsensusError> {
    params.check(rankings.len())?;
    let tops = eligible_top_k(rankings, manifest, params)?;
    let grid = grid_from(&tops, params.min_cohort_support);

    let mut topics = Vec::new();
    for (col, topic) in grid.topics.iter().enumerate() {
        if !grid.persistent[col] {
            continue;
        }
        let supporting_cohorts: Vec<String> = grid
            .cohorts
            .iter()
            .zip(&grid.cells)
            .filter(|(_, row)| row[col] > 0)
            .map(|(c, _)| c.clone())
            .collect();
        let quiz_ids: BTreeSet<String> = tops
            .iter()
            .flat_map(|(_, top)| top.iter())
            .filter(|(_, t)| t == topic)
            .map(|(q, _)| q.clone())
            .collect();
        let question_ids: Vec<String> = manifest
            .quizzes
            .iter()
            .filter(|q| quiz_ids.contains(&q.quiz_id))
            .flat_map(|q| q.question_ids.iter().cloned())
            .collect();
        topics.push(PersistentTopic {
            topic: topic.clone(),
            cohort_support: supporting_cohorts.len(),
            supporting_cohorts,
            quiz_ids,
            question_count: question_ids.len(),
            question_ids,
        });
    }
    topics.sort_by(|a, b| {
        b.cohort_support
            .cmp(&a.cohort_support)
            .then_with(|| a.topic.cmp(&b.topic))
    });

    let identified = grid.topics.len();
    let persistent = topics.len();
    let percent_persistent = if identified == 0 {
        0
    } else {
        ((200 * persistent + identified) / (2 * identified)) as u32
    };
    Ok(ConsensusReport {
        course_type: manifest.course_type.clone(),
        params: *params,
        topics,
        grid,
        summary: ConsensusSummary {
            identified,
            persistent,
            percent_persistent,
        },
        notes: vec![QUESTION_COUNT_NOTE.to_string()],
    })
}

/// Per-cohort count of top-k quizzes for each topic, keyed (cohort, topic).
pub fn recount_support(
    rankings: &[CohortRanking],
    manifest: &CourseManifest,
    params: &ConsensusParams,
) -> Result<BTreeMap<(String, TopicId), usize>, ConsensusError> {
    let mut out = BTreeMap::new();
    for (cohort, top) in eligible_top_k(rankings, manifest, params)? {
        for (_, topic) in top {
            *out.entry((cohort.clone(), topic)).or_default() += 1;
        }
    }
    Ok(out)
}
