//! Problem XML, tracking logs, and first-attempt derivation.

mod log;
mod problem;
mod scoring;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CourseManifest;

pub use log::{
    parse_event_log, AttemptEvent, EventLogParser, LogLine, Reject, RejectReason, ResponsePayload,
    PROBLEM_CHECK,
};
pub use problem::{
    parse_problem_xml, CorrectChoice, ProblemError, ProblemInfo, QuestionRecord, ResponseType,
};
pub use scoring::{normalize_answer, score_response, ScoreError};

/// Parsed question records keyed by question id.
pub type QuestionBank = BTreeMap<String, QuestionRecord>;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("problem {question_id}: {source}")]
    Problem {
        question_id: String,
        #[source]
        source: ProblemError,
    },
}

/// Reads and parses `<problems_dir>/<question_id>.xml` for every manifest question.
pub fn load_question_bank(manifest: &CourseManifest) -> Result<QuestionBank, IngestError> {
    let mut bank = QuestionBank::new();
    for qid in manifest.question_ids() {
        let path = manifest.problem_path(qid);
        let xml = std::fs::read_to_string(&path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        let record = parse_problem_xml(&xml, qid).map_err(|source| IngestError::Problem {
            question_id: qid.to_string(),
            source,
        })?;
        bank.insert(qid.to_string(), record);
    }
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstAttempt {
    pub event: AttemptEvent,
    pub correct: bool,
}

/// A first attempt that could not be scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnscoredAttempt {
    pub student_id: String,
    pub question_id: String,
    pub reason: String,
}

/// Earliest response per (student, question), keyed student → question.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstAttemptTable {
    pub rows: BTreeMap<String, BTreeMap<String, FirstAttempt>>,
    /// Events whose question is not in the manifest.
    pub dropped_non_manifest: usize,
    pub unscored: Vec<UnscoredAttempt>,
}

impl FirstAttemptTable {
    pub fn len(&self) -> usize {
        self.rows.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, student_id: &str, question_id: &str) -> Option<&FirstAttempt> {
        self.rows.get(student_id)?.get(question_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FirstAttempt> {
        self.rows.values().flat_map(BTreeMap::values)
    }

    /// First attempts on one question, in student order.
    pub fn for_question<'a>(
        &'a self,
        question_id: &'a str,
    ) -> impl Iterator<Item = &'a FirstAttempt> + 'a {
        self.rows.values().filter_map(move |m| m.get(question_id))
    }

    pub fn students(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// Merges tables with disjoint students (e.g. several cohorts).
    pub fn merged<'a>(
        tables: impl IntoIterator<Item = &'a FirstAttemptTable>,
    ) -> FirstAttemptTable {
        let mut out = FirstAttemptTable::default();
        for t in tables {
            for (student, row) in &t.rows {
                out.rows
                    .entry(student.clone())
                    .or_default()
                    .extend(row.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
            out.dropped_non_manifest += t.dropped_non_manifest;
            out.unscored.extend(t.unscored.iter().cloned());
        }
        out
    }
}

/// Keeps, per (student, question), the event with minimum (timestamp, sequence_no),
/// then scores it. Events on non-manifest questions are dropped and counted.
pub fn derive_first_attempts(
    events: &[AttemptEvent],
    manifest: &CourseManifest,
    questions: &QuestionBank,
) -> FirstAttemptTable {
    let in_manifest: std::collections::BTreeSet<&str> = manifest.question_ids().collect();
    let mut earliest: BTreeMap<(&str, &str), &AttemptEvent> = BTreeMap::new();
    let mut dropped = 0;
    for ev in events {
        if !in_manifest.contains(ev.question_id.as_str()) {
            dropped += 1;
            continue;
        }
        earliest
            .entry((ev.student_id.as_str(), ev.question_id.as_str()))
            .and_modify(|cur| {
                if (ev.timestamp, ev.sequence_no) < (cur.timestamp, cur.sequence_no) {
                    *cur = ev;
                }
            })
            .or_insert(ev);
    }

    let mut table = FirstAttemptTable {
        dropped_non_manifest: dropped,
        ..Default::default()
    };
    for ((student, qid), ev) in earliest {
        let scored = match questions.get(qid) {
            Some(q) => {
                score_response(q, &ev.response, ev.platform_correct).map_err(|e| e.to_string())
            }
            None => Err(format!("no question record for {qid}")),
        };
        match scored {
            Ok(correct) => {
                table.rows.entry(student.to_string()).or_default().insert(
                    qid.to_string(),
                    FirstAttempt {
                        event: ev.clone(),
                        correct,
                    },
                );
            }
            Err(reason) => table.unscored.push(UnscoredAttempt {
                student_id: student.to_string(),
                question_id: qid.to_string(),
                reason,
            }),
        }
    }
    table
}

/// Events grouped by the cohort owning their run, plus the count with no cohort.
pub fn partition_by_cohort(
    events: Vec<AttemptEvent>,
    manifest: &CourseManifest,
) -> (BTreeMap<String, Vec<AttemptEvent>>, usize) {
    let mut out: BTreeMap<String, Vec<AttemptEvent>> = manifest
        .cohorts
        .iter()
        .map(|c| (c.label.clone(), Vec::new()))
        .collect();
    let mut unassigned = 0;
    for ev in events {
        match manifest.cohort_of_run(&ev.run_label) {
            Some(label) => out.get_mut(label).expect("cohort present").push(ev),
            None => unassigned += 1,
        }
    }
    (out, unassigned)
}

/// Cohort whose declared enrollment differs from the students seen in its logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrollmentMismatch {
    pub cohort: String,
    pub declared: u64,
    pub observed: u64,
}

pub fn enrollment_mismatches(
    manifest: &CourseManifest,
    tables: &BTreeMap<String, FirstAttemptTable>,
) -> Vec<EnrollmentMismatch> {
    manifest
        .cohorts
        .iter()
        .filter_map(|c| {
            let observed = tables.get(&c.label).map_or(0, |t| t.rows.len() as u64);
            (observed != c.enrollment_count).then(|| EnrollmentMismatch {
                cohort: c.label.clone(),
                declared: c.enrollment_count,
                observed,
            })
        })
        .collect()
}
