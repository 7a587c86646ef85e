//! Course manifest: cohorts, quizzes, questions and transcripts bound into one model.
//!
//! The manifest is the single source of the quiz → question → transcript mapping.
//! Nothing downstream infers structure from the logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("manifest parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("manifest failed validation with {} issue(s): {}", .0.len(), join_issues(.0))]
    Validation(Vec<ValidationIssue>),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// One violated manifest invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    DuplicateQuestionId {
        question_id: String,
        quiz_id: String,
    },
    DuplicateQuizId {
        quiz_id: String,
    },
    UnknownTranscriptId {
        transcript_id: String,
        quiz_id: String,
    },
    DuplicateCohortLabel {
        label: String,
    },
    EmptyQuestionIds {
        quiz_id: String,
    },
    EmptyLectureTitles {
        quiz_id: String,
    },
    InconsistentTitles {
        quiz_id: String,
        canonical: Vec<String>,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateQuestionId {
                question_id,
                quiz_id,
            } => write!(
                f,
                "question id {question_id:?} in quiz {quiz_id:?} is already used"
            ),
            Self::DuplicateQuizId { quiz_id } => write!(f, "quiz id {quiz_id:?} is duplicated"),
            Self::UnknownTranscriptId {
                transcript_id,
                quiz_id,
            } => write!(
                f,
                "quiz {quiz_id:?} references unknown transcript id {transcript_id:?}"
            ),
            Self::DuplicateCohortLabel { label } => {
                write!(f, "cohort label {label:?} is duplicated")
            }
            Self::EmptyQuestionIds { quiz_id } => write!(f, "quiz {quiz_id:?} has no questions"),
            Self::EmptyLectureTitles { quiz_id } => {
                write!(f, "quiz {quiz_id:?} has no lecture titles")
            }
            Self::InconsistentTitles { quiz_id, canonical } => write!(
                f,
                "quiz {quiz_id:?} lecture titles normalize to different topics: {canonical:?}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub label: String,
    #[serde(default)]
    pub runs: Vec<String>,
    #[serde(default)]
    pub enrollment_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizSpec {
    pub quiz_id: String,
    pub lecture_titles: Vec<String>,
    pub question_ids: Vec<String>,
    #[serde(default)]
    pub transcript_ids: Vec<String>,
}

impl QuizSpec {
    /// Topic this quiz maps to.
    pub fn topic(&self) -> Result<TopicId, TopicError> {
        normalize_topic(&self.lecture_titles)
    }
}

fn default_problems_dir() -> PathBuf {
    PathBuf::from("problems")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseManifest {
    pub course_type: String,
    pub cohorts: Vec<CohortSpec>,
    pub quizzes: Vec<QuizSpec>,
    #[serde(default)]
    pub transcripts: BTreeMap<String, PathBuf>,
    /// Directory holding `<question_id>.xml` problem files, relative to the manifest.
    #[serde(default = "default_problems_dir")]
    pub problems_dir: PathBuf,
    /// Directory the manifest was loaded from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Counts reported after a successful load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub n_cohorts: usize,
    pub n_quizzes: usize,
    pub n_questions: usize,
    pub n_transcripts: usize,
}

impl CourseManifest {
    /// Parses manifest JSON and validates it. `base_dir` anchors relative paths.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let mut manifest: CourseManifest =
            serde_json::from_str(text).map_err(|e| CorpusError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        manifest.base_dir = base_dir.into();
        let issues = manifest.validate();
        if issues.is_empty() {
            Ok(manifest)
        } else {
            Err(CorpusError::Validation(issues))
        }
    }

    /// Every violated invariant, one issue per violation.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();

        let mut labels = BTreeSet::new();
        for cohort in &self.cohorts {
            if !labels.insert(cohort.label.as_str()) {
                issues.push(ValidationIssue::DuplicateCohortLabel {
                    label: cohort.label.clone(),
                });
            }
        }

        let mut quiz_ids = BTreeSet::new();
        let mut question_ids = BTreeSet::new();
        for quiz in &self.quizzes {
            if !quiz_ids.insert(quiz.quiz_id.as_str()) {
                issues.push(ValidationIssue::DuplicateQuizId {
                    quiz_id: quiz.quiz_id.clone(),
                });
            }
            if quiz.question_ids.is_empty() {
                issues.push(ValidationIssue::EmptyQuestionIds {
                    quiz_id: quiz.quiz_id.clone(),
                });
            }
            for qid in &quiz.question_ids {
                if !question_ids.insert(qid.as_str()) {
                    issues.push(ValidationIssue::DuplicateQuestionId {
                        question_id: qid.clone(),
                        quiz_id: quiz.quiz_id.clone(),
                    });
                }
            }
            for tid in &quiz.transcript_ids {
                if !self.transcripts.contains_key(tid) {
                    issues.push(ValidationIssue::UnknownTranscriptId {
                        transcript_id: tid.clone(),
                        quiz_id: quiz.quiz_id.clone(),
                    });
                }
            }
            match normalize_topic(&quiz.lecture_titles) {
                Ok(_) => {}
                Err(TopicError::EmptyTitles) => issues.push(ValidationIssue::EmptyLectureTitles {
                    quiz_id: quiz.quiz_id.clone(),
                }),
                Err(TopicError::InconsistentTitles(canonical)) => {
                    issues.push(ValidationIssue::InconsistentTitles {
                        quiz_id: quiz.quiz_id.clone(),
                        canonical,
                    })
                }
            }
        }
        issues
    }

    pub fn summary(&self) -> ManifestSummary {
        ManifestSummary {
            n_cohorts: self.cohorts.len(),
            n_quizzes: self.quizzes.len(),
            n_questions: self.quizzes.iter().map(|q| q.question_ids.len()).sum(),
            n_transcripts: self.transcripts.len(),
        }
    }

    pub fn quiz(&self, quiz_id: &str) -> Option<&QuizSpec> {
        self.quizzes.iter().find(|q| q.quiz_id == quiz_id)
    }

    pub fn cohort(&self, label: &str) -> Option<&CohortSpec> {
        self.cohorts.iter().find(|c| c.label == label)
    }

    /// Quiz containing `question_id`, if any.
    pub fn quiz_of_question(&self, question_id: &str) -> Option<&QuizSpec> {
        self.quizzes
            .iter()
            .find(|q| q.question_ids.iter().any(|id| id == question_id))
    }

    /// All question ids in manifest order.
    pub fn question_ids(&self) -> impl Iterator<Item = &str> {
        self.quizzes
            .iter()
            .flat_map(|q| q.question_ids.iter().map(String::as_str))
    }

    pub fn has_question(&self, question_id: &str) -> bool {
        self.question_ids().any(|q| q == question_id)
    }

    /// Cohort label owning a course run, if any.
    pub fn cohort_of_run(&self, run: &str) -> Option<&str> {
        self.cohorts
            .iter()
            .find(|c| c.runs.iter().any(|r| r == run))
            .map(|c| c.label.as_str())
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        if relative.is_absolute() {
            relative.to_path_buf()
        } else {
            self.base_dir.join(relative)
        }
    }

    pub fn problem_path(&self, question_id: &str) -> PathBuf {
        self.resolve(&self.problems_dir)
            .join(format!("{question_id}.xml"))
    }

    /// Reads one transcript file. Unknown ids are a caller bug after validation.
    pub fn read_transcript(&self, transcript_id: &str) -> Result<String, CorpusError> {
        let rel = self.transcripts.get(transcript_id).ok_or_else(|| {
            CorpusError::Validation(vec![ValidationIssue::UnknownTranscriptId {
                transcript_id: transcript_id.to_string(),
                quiz_id: String::new(),
            }])
        })?;
        let path = self.resolve(rel);
        std::fs::read_to_string(&path).map_err(|source| CorpusError::Io { path, source })
    }

    /// Transcripts of a quiz in manifest order.
    pub fn quiz_transcripts(&self, quiz: &QuizSpec) -> Result<Vec<String>, CorpusError> {
        quiz.transcript_ids
            .iter()
            .map(|id| self.read_transcript(id))
            .collect()
    }
}

/// Loads and validates a manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CourseManifest, CorpusError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    CourseManifest::from_json(&text, base)
}

/// Canonical topic title: lecture title with its part designator removed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicId(String);

impl TopicId {
    /// Normalizes `title` into a topic id.
    pub fn new(title: &str) -> Self {
        TopicId(normalize_title(title))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopicError {
    #[error("no lecture titles given")]
    EmptyTitles,
    #[error("lecture titles normalize to different topics: {0:?}")]
    InconsistentTitles(Vec<String>),
}

fn part_suffix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:\s+-\s*part\s+[1-9][0-9]*|\s+part\s+[1-9][0-9]*|\s*\(\s*part\s+[1-9][0-9]*\s*\))$")
            .expect("valid part-suffix pattern")
    })
}

/// Collapses whitespace and strips trailing part designators
/// (" - Part N", " Part N", "(Part N)"), repeatedly, so the result is a fixed point.
pub fn normalize_title(title: &str) -> String {
    let mut current = collapse_whitespace(title);
    loop {
        let stripped = part_suffix().replace(&current, "");
        let stripped = collapse_whitespace(&stripped);
        if stripped == current || stripped.is_empty() {
            return current;
        }
        current = stripped;
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Maps a quiz's lecture titles to its topic; all titles must agree after normalization.
pub fn normalize_topic<S: AsRef<str>>(lecture_titles: &[S]) -> Result<TopicId, TopicError> {
    let canonical: BTreeSet<String> = lecture_titles
        .iter()
        .map(|t| normalize_title(t.as_ref()))
        .collect();
    let mut iter = canonical.iter();
    match (iter.next(), iter.next()) {
        (None, _) => Err(TopicError::EmptyTitles),
        (Some(only), None) => Ok(TopicId(only.clone())),
        _ => Err(TopicError::InconsistentTitles(
            canonical.into_iter().collect(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
          "course_type": "Immunology",
          "cohorts": [{"label": "Cohort 1", "runs": ["2019-07"], "enrollment_count": 3}],
          "quizzes": [
            {"quiz_id": "qz1", "lecture_titles": ["Novel Immune Therapies - Part 1"],
             "question_ids": ["p1", "p2"], "transcript_ids": ["t1"]},
            {"quiz_id": "qz2", "lecture_titles": ["Novel Immune Therapies - Part 2"],
             "question_ids": ["p3"], "transcript_ids": ["t2"]}
          ],
          "transcripts": {"t1": "t1.txt", "t2": "t2.txt"}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_manifest_loads() {
        let m = CourseManifest::from_json(&minimal_json(), "/tmp").unwrap();
        assert_eq!(m.quizzes.len(), 2);
        assert_eq!(m.summary().n_questions, 3);
        assert_eq!(m.problems_dir, PathBuf::from("problems"));
        assert_eq!(m.cohort_of_run("2019-07"), Some("Cohort 1"));
        assert_eq!(m.quizzes[0].topic().unwrap(), m.quizzes[1].topic().unwrap());
    }

    #[test]
    fn unknown_transcript_is_named() {
        let json =
            minimal_json().replace(r#""transcript_ids": ["t2"]"#, r#""transcript_ids": ["t9"]"#);
        let err = CourseManifest::from_json(&json, "/tmp").unwrap_err();
        assert!(err.to_string().contains("t9"), "{err}");
        match err {
            CorpusError::Validation(issues) => assert_eq!(issues.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_has_position() {
        let err = CourseManifest::from_json("{\n  \"course_type\": ,\n}", "/tmp").unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        let err = load_manifest("/definitely/not/here.json").unwrap_err();
        assert!(matches!(err, CorpusError::MissingFile(_)));
    }

    #[test]
    fn every_violation_reported() {
        let json = r#"{
          "course_type": "X",
          "cohorts": [{"label": "A"}, {"label": "A"}],
          "quizzes": [
            {"quiz_id": "q1", "lecture_titles": [], "question_ids": ["p1"], "transcript_ids": ["nope"]},
            {"quiz_id": "q2", "lecture_titles": ["Alpha", "Beta"], "question_ids": ["p1"]},
            {"quiz_id": "q3", "lecture_titles": ["Gamma"], "question_ids": []}
          ]
        }"#;
        let CorpusError::Validation(issues) = CourseManifest::from_json(json, "/").unwrap_err()
        else {
            panic!("expected validation error");
        };
        assert_eq!(issues.len(), 6, "{issues:#?}");
    }

    #[test]
    fn part_suffixes() {
        let cases = [
            ("Novel Immune Therapies - Part 1", "Novel Immune Therapies"),
            (
                "The Germinal Center Reaction",
                "The Germinal Center Reaction",
            ),
            ("Costimulation (Part 2)", "Costimulation"),
            ("Costimulation(part 12)", "Costimulation"),
            ("Concept X Part 3", "Concept X"),
            ("Concept X - PART 2", "Concept X"),
            ("Concept X -Part 2", "Concept X"),
            ("  Spaced   out  title  ", "Spaced out title"),
            ("Concept X - Part 0", "Concept X - Part 0"),
            ("Concept X - Part two", "Concept X - Part two"),
            ("Particles Part", "Particles Part"),
            ("Part 1", "Part 1"),
            ("Counterpart 2", "Counterpart 2"),
            ("X - Part 1 - Part 2", "X"),
        ];
        for (input, want) in cases {
            assert_eq!(normalize_title(input), want, "input {input:?}");
        }
    }

    #[test]
    fn inconsistent_titles() {
        let err = normalize_topic(&["A - Part 1", "B - Part 2"]).unwrap_err();
        assert!(matches!(err, TopicError::InconsistentTitles(v) if v.len() == 2));
        assert_eq!(
            normalize_topic(&["A - Part 1", "A (Part 2)"])
                .unwrap()
                .as_str(),
            "A"
        );
        assert_eq!(normalize_topic::<&str>(&[]), Err(TopicError::EmptyTitles));
    }

    proptest::proptest! {
        #[test]
        fn normalization_is_idempotent(s in "[A-Za-z ()\\-0-9]{0,40}") {
            let once = normalize_title(&s);
            proptest::prop_assert_eq!(normalize_title(&once), once.clone());
        }

        #[test]
        fn part_variants_share_topic(base in "[A-Z][a-z]{1,8}( [a-z]{1,8}){0,3}", n in 1u32..20, m in 1u32..20) {
            let a = format!("{base} - Part {n}");
            let b = format!("{base} (Part {m})");
            proptest::prop_assert_eq!(TopicId::new(&a), TopicId::new(&b));
        }
    }
}
