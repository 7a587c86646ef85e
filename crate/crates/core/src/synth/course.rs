//! Writes synthetic courses in the on-disk formats the pipeline reads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{normalize_topic, CohortSpec, CourseManifest, QuizSpec};
use crate::ingest::{QuestionRecord, ResponseType};
use crate::llm::prompts::Provenance;
use crate::llm::provider::{default_fixture_name, FixtureResponse};
use crate::llm::SchemaId;

use super::{
    generate_event_log, generate_rasch_responses, synthetic_question, GroundTruth, SynthConfig,
    SynthError, SynthKind, SynthQuiz,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseQuiz {
    pub quiz: SynthQuiz,
    pub lecture_titles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCohort {
    pub label: String,
    pub n_students: usize,
    /// Quizzes made harder in this cohort only.
    #[serde(default)]
    pub shifted: Vec<String>,
    #[serde(default)]
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCourse {
    pub course_type: String,
    pub seed: u64,
    pub quizzes: Vec<CourseQuiz>,
    pub cohorts: Vec<SynthCohort>,
    pub attempt_noise: f64,
    pub missingness: f64,
    /// Quizzes shifted in every cohort.
    #[serde(default)]
    pub planted: Vec<String>,
}

impl SynthCourse {
    /// Cohort `index` uses seed + index and its own run label.
    pub fn cohort_config(&self, index: usize) -> Result<SynthConfig, SynthError> {
        let cohort = &self.cohorts[index];
        let mut quizzes: Vec<SynthQuiz> = self.quizzes.iter().map(|q| q.quiz.clone()).collect();
        for id in &cohort.shifted {
            let q = quizzes
                .iter_mut()
                .find(|q| &q.quiz_id == id)
                .ok_or_else(|| SynthError::UnknownQuizId(id.clone()))?;
            for b in &mut q.true_b {
                *b += cohort.shift;
            }
        }
        let config = SynthConfig {
            seed: self.seed.wrapping_add(index as u64),
            n_students: cohort.n_students,
            quizzes,
            attempt_noise: self.attempt_noise,
            missingness: self.missingness,
            run_label: run_label(&cohort.label),
            planted: self.planted.iter().cloned().collect(),
        };
        config.validate()?;
        Ok(config)
    }

    /// Quizzes of `questions_per_quiz` items with b ~ N(0, 1) (see [`SynthConfig::standard`]),
    /// `planted` shifted by `delta_b` in every cohort, one lecture title per quiz.
    pub fn planted_standard(
        course_type: &str,
        seed: u64,
        n_cohorts: usize,
        n_students: usize,
        n_quizzes: usize,
        questions_per_quiz: usize,
        planted: &[String],
        delta_b: f64,
    ) -> Result<Self, SynthError> {
        let base = SynthConfig::standard(seed, n_students, n_quizzes, questions_per_quiz);
        let base = super::plant_challenging_topics(&base, planted, delta_b)?;
        Ok(SynthCourse {
            course_type: course_type.to_string(),
            seed,
            quizzes: base
                .quizzes
                .into_iter()
                .map(|quiz| CourseQuiz {
                    lecture_titles: vec![format!("Lecture {}", quiz.quiz_id)],
                    quiz,
                })
                .collect(),
            cohorts: (0..n_cohorts)
                .map(|c| SynthCohort {
                    label: format!("Cohort {}", c + 1),
                    n_students,
                    shifted: vec![],
                    shift: 0.0,
                })
                .collect(),
            attempt_noise: 0.1,
            missingness: 0.0,
            planted: planted.to_vec(),
        })
    }

    pub fn manifest(&self) -> CourseManifest {
        CourseManifest {
            course_type: self.course_type.clone(),
            cohorts: self
                .cohorts
                .iter()
                .map(|c| CohortSpec {
                    label: c.label.clone(),
                    runs: vec![run_label(&c.label)],
                    enrollment_count: c.n_students as u64,
                })
                .collect(),
            quizzes: self
                .quizzes
                .iter()
                .map(|q| QuizSpec {
                    quiz_id: q.quiz.quiz_id.clone(),
                    lecture_titles: q.lecture_titles.clone(),
                    question_ids: (0..q.quiz.n_questions())
                        .map(|j| q.quiz.question_id(j))
                        .collect(),
                    transcript_ids: vec![transcript_id(&q.quiz.quiz_id)],
                })
                .collect(),
            transcripts: self
                .quizzes
                .iter()
                .map(|q| {
                    (
                        transcript_id(&q.quiz.quiz_id),
                        PathBuf::from(format!("transcripts/{}.txt", q.quiz.quiz_id)),
                    )
                })
                .collect(),
            problems_dir: PathBuf::from("problems"),
            base_dir: PathBuf::new(),
        }
    }

    pub fn questions(&self) -> Vec<QuestionRecord> {
        self.quizzes
            .iter()
            .flat_map(|q| (0..q.quiz.n_questions()).map(move |j| synthetic_question(&q.quiz, j)))
            .collect()
    }

    /// Topic titles in quiz order, deduplicated.
    pub fn topics(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for q in &self.quizzes {
            if let Ok(t) = normalize_topic(&q.lecture_titles) {
                let t = t.as_str().to_string();
                if !seen.contains(&t) {
                    seen.push(t);
                }
            }
        }
        seen
    }
}

fn run_label(cohort_label: &str) -> String {
    format!("{}-run1", cohort_label.to_lowercase().replace(' ', "-"))
}

fn transcript_id(quiz_id: &str) -> String {
    format!("t_{quiz_id}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Problem XML in the layout `parse_problem_xml` reads back.
pub fn question_xml(q: &QuestionRecord) -> String {
    let mut x = String::from("<problem>\n");
    let label = format!("    <label>{}</label>\n", xml_escape(&q.problem_stem));
    let choices = |tag: &str| {
        q.choices
            .iter()
            .enumerate()
            .map(|(i, c)| {
                format!(
                    "      <{tag} correct=\"{}\">{}</{tag}>\n",
                    if q.correct_choices.contains(&i) {
                        "true"
                    } else {
                        "false"
                    },
                    xml_escape(c)
                )
            })
            .collect::<String>()
    };
    match q.response_type {
        ResponseType::MultipleChoice => {
            x.push_str("  <multiplechoiceresponse>\n");
            x.push_str(&label);
            x.push_str("    <choicegroup type=\"MultipleChoice\">\n");
            x.push_str(&choices("choice"));
            x.push_str("    </choicegroup>\n  </multiplechoiceresponse>\n");
        }
        ResponseType::Checkbox => {
            x.push_str("  <choiceresponse>\n");
            x.push_str(&label);
            x.push_str("    <checkboxgroup>\n");
            x.push_str(&choices("choice"));
            x.push_str("    </checkboxgroup>\n  </choiceresponse>\n");
        }
        ResponseType::Dropdown => {
            x.push_str("  <optionresponse>\n");
            x.push_str(&label);
            x.push_str("    <optioninput>\n");
            x.push_str(&choices("option"));
            x.push_str("    </optioninput>\n  </optionresponse>\n");
        }
        ResponseType::ShortAnswer => {
            let (first, rest) = q
                .accepted_answers
                .split_first()
                .expect("short answer has an accepted answer");
            let _ = writeln!(
                x,
                "  <stringresponse answer=\"{}\" type=\"ci\">",
                xml_escape(first)
            );
            x.push_str(&label);
            for a in rest {
                let _ = writeln!(x, "    <additional_answer answer=\"{}\"/>", xml_escape(a));
            }
            x.push_str("    <textline size=\"20\"/>\n  </stringresponse>\n");
        }
        ResponseType::DragAndDrop => {
            x.push_str("  <customresponse>\n");
            x.push_str(&label);
            x.push_str(
                "    <drag_and_drop_input img=\"/static/board.png\"/>\n  </customresponse>\n",
            );
        }
    }
    if !q.explanation.is_empty() {
        let _ = writeln!(
            x,
            "  <solution>\n    <div class=\"detailed-solution\">\n      <p>{}</p>\n    </div>\n  </solution>",
            xml_escape(&q.explanation)
        );
    }
    x.push_str("</problem>\n");
    x
}

fn transcript_text(title: &str, quiz_id: &str) -> String {
    format!(
        "Welcome to this session on {title}. We start by recalling the ideas from the previous session and then \
         introduce the main mechanism covered in quiz {quiz_id}. Along the way we look at two worked examples and \
         point out where students often mix up cause and effect. We close with a short summary of the key terms."
    )
}

/// Deterministic fixture sizes so mock token counts do not depend on the run.
fn misconception_fixture(q: &QuestionRecord, ordinal: usize) -> FixtureResponse {
    let output = json!({
        "reasoning": format!(
            "The most common wrong answer to {} suggests students confuse the keyed concept with a related one introduced in the same lecture.",
            q.question_id
        ),
        "misconceptions": [
            format!("Students may treat the distractor for {} as equivalent to the keyed answer.", q.question_id),
            "Students may remember the term from the lecture without its mechanism.",
        ],
    });
    FixtureResponse::output(
        output,
        1500 + 10 * (ordinal as u64 % 50),
        300 + (ordinal as u64 % 40),
    )
}

fn synopsis_fixture(topic: &str, ordinal: usize) -> FixtureResponse {
    let text = format!(
        "<synopsis>\n- {topic} overview - Introduces the central ideas of {topic}.\n- Key mechanism - Describes the main mechanism covered in the lectures.\n- Common confusions - Points out related concepts that are easy to mix up.\n- Worked examples - Walks through two short examples.\n- Summary - Recaps the key terms.\n</synopsis>"
    );
    FixtureResponse::text(
        text,
        2000 + 25 * (ordinal as u64 % 40),
        250 + (ordinal as u64 % 30),
    )
}

/// Per-cohort ground truth, written without the (large) per-attempt tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTruth {
    pub label: String,
    pub seed: u64,
    pub true_b: BTreeMap<String, f64>,
    pub hardest_quiz_ids: Vec<String>,
    pub n_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CourseLayout {
    pub root: PathBuf,
    pub manifest: PathBuf,
    /// Cohort label to log file.
    pub logs: BTreeMap<String, PathBuf>,
    pub mock_dir: PathBuf,
    pub truth: BTreeMap<String, GroundTruth>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> SynthError {
    SynthError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), SynthError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// Writes `manifest.json`, `problems/`, `transcripts/`, `logs/<cohort>.jsonl`,
/// `mock/` fixtures for every question and topic, and `truth.json`.
pub fn write_course(
    course: &SynthCourse,
    root: impl AsRef<Path>,
) -> Result<CourseLayout, SynthError> {
    let root = root.as_ref().to_path_buf();
    let manifest = course.manifest();
    let manifest_path = root.join("manifest.json");
    write(&manifest_path, pretty(&manifest))?;
    let questions = course.questions();
    for q in &questions {
        write(
            &root.join("problems").join(format!("{}.xml", q.question_id)),
            question_xml(q),
        )?;
    }
    for q in &course.quizzes {
        let title = normalize_topic(&q.lecture_titles)
            .map(|t| t.as_str().to_string())
            .unwrap_or_else(|_| q.quiz.quiz_id.clone());
        write(
            &root
                .join("transcripts")
                .join(format!("{}.txt", q.quiz.quiz_id)),
            transcript_text(&title, &q.quiz.quiz_id),
        )?;
    }
    let mock_dir = root.join("mock");
    for (i, q) in questions.iter().enumerate() {
        if q.response_type == ResponseType::DragAndDrop {
            continue;
        }
        let key = Provenance {
            question_id: Some(q.question_id.clone()),
            ..Provenance::default()
        }
        .key();
        write(
            &mock_dir.join(format!("{key}.json")),
            pretty(&misconception_fixture(q, i)),
        )?;
    }
    for (i, topic) in course.topics().iter().enumerate() {
        let key = Provenance {
            topic: Some(topic.clone()),
            ..Provenance::default()
        }
        .key();
        write(
            &mock_dir.join(format!("{key}.json")),
            pretty(&synopsis_fixture(topic, i)),
        )?;
    }
    write(
        &mock_dir.join(default_fixture_name(SchemaId::Synopsis)),
        pretty(&synopsis_fixture("this topic", 0)),
    )?;
    let mut logs = BTreeMap::new();
    let mut truth = BTreeMap::new();
    let mut summaries = Vec::new();
    for (i, cohort) in course.cohorts.iter().enumerate() {
        let config = course.cohort_config(i)?;
        let (matrix, mut t) = generate_rasch_responses(&config)?;
        let lines = generate_event_log(&matrix, &mut t, &config)?;
        let mut text = String::with_capacity(lines.len() * 160);
        for l in &lines {
            text.push_str(&l.to_json());
            text.push('\n');
        }
        let file = root
            .join("logs")
            .join(format!("{}.jsonl", run_label(&cohort.label)));
        write(&file, text)?;
        logs.insert(cohort.label.clone(), file);
        summaries.push(CohortTruth {
            label: cohort.label.clone(),
            seed: config.seed,
            true_b: t.true_b.clone(),
            hardest_quiz_ids: t.hardest_quiz_ids.clone(),
            n_events: lines.len(),
        });
        truth.insert(cohort.label.clone(), t);
    }
    write(
        &root.join("truth.json"),
        pretty(&json!({"course": course, "cohorts": summaries})),
    )?;
    Ok(CourseLayout {
        root,
        manifest: manifest_path,
        logs,
        mock_dir,
        truth,
    })
}

/// Known fixture course names, lower case.
pub const FIXTURE_COURSES: [&str; 5] = [
    "pharmacology",
    "genetics",
    "immunology",
    "biochemistry",
    "physiology",
];

/// Persistent topics (title, questions per part quiz) for the fixture courses. Each
/// course has 40 quizzes; the planted quizzes plus the cohort-specific ones fill
/// every cohort's ten hardest slots.
fn fixture_topics(name: &str) -> Option<(&'static str, Vec<(String, Vec<usize>)>)> {
    let generic = |course: &str, counts: &[usize]| {
        counts
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("{course} Topic {:02}", i + 1), vec![n]))
            .collect::<Vec<_>>()
    };
    Some(match name.to_lowercase().as_str() {
        "immunology" => (
            "Immunology",
            vec![
                ("Novel Immune Therapies".to_string(), vec![3, 2]),
                (
                    "Costimulation and The Two Signal Requirement".into(),
                    vec![3, 3],
                ),
                (
                    "Immunological Barriers to Transplantation and Transfusion".into(),
                    vec![4],
                ),
                ("Response of Sentinel Cells".into(), vec![2]),
                ("Innate Recognition of Microbes".into(), vec![5]),
                ("The Germinal Center Reaction".into(), vec![3]),
                ("Immunodeficiencies".into(), vec![3]),
            ],
        ),
        "genetics" => (
            "Genetics",
            generic("Genetics", &[4, 4, 4, 4, 4, 3, 3, 3, 3]),
        ),
        "biochemistry" => ("Biochemistry", generic("Biochemistry", &[3; 8])),
        "pharmacology" => (
            "Pharmacology",
            generic("Pharmacology", &[4, 4, 4, 4, 4, 4, 3, 3, 3, 3]),
        ),
        "physiology" => ("Physiology", generic("Physiology", &[2; 10])),
        _ => return None,
    })
}

/// A fixture course whose persistent-topic question total is fixed by construction:
/// pharmacology 36, genetics 32, immunology 28, biochemistry 24, physiology 20.
pub fn fixture_course(name: &str, seed: u64, n_students: usize) -> Option<SynthCourse> {
    const N_QUIZZES: usize = 40;
    const TOP_K: usize = 10;
    const OFFSETS: [f64; 5] = [-0.3, 0.0, 0.3, -0.15, 0.15];
    let (course_type, topics) = fixture_topics(name)?;
    let kinds = vec![
        SynthKind::MultipleChoice,
        SynthKind::Checkbox,
        SynthKind::Dropdown,
        SynthKind::ShortAnswer,
    ];
    let mut quizzes = Vec::new();
    let mut planted = Vec::new();
    for (title, parts) in &topics {
        for (p, &n) in parts.iter().enumerate() {
            let quiz_id = format!(
                "{}{:02}",
                course_type[..3].to_lowercase(),
                quizzes.len() + 1
            );
            let title = if parts.len() > 1 {
                format!("{title} - Part {}", p + 1)
            } else {
                title.clone()
            };
            planted.push(quiz_id.clone());
            quizzes.push(CourseQuiz {
                quiz: SynthQuiz {
                    quiz_id,
                    true_b: (0..n).map(|j| 3.0 + OFFSETS[j % OFFSETS.len()]).collect(),
                    kinds: kinds.clone(),
                },
                lecture_titles: vec![title],
            });
        }
    }
    let n_planted = quizzes.len();
    let n_rest = N_QUIZZES - n_planted;
    for r in 0..n_rest {
        let mean = -1.0 + 1.5 * r as f64 / (n_rest - 1) as f64;
        let quiz_id = format!(
            "{}{:02}",
            course_type[..3].to_lowercase(),
            quizzes.len() + 1
        );
        quizzes.push(CourseQuiz {
            quiz: SynthQuiz {
                quiz_id,
                true_b: (0..3).map(|j| mean + OFFSETS[j]).collect(),
                kinds: kinds.clone(),
            },
            lecture_titles: vec![format!("{course_type} Lecture {:02}", r + 1)],
        });
    }
    // Interleave so planted quizzes are not simply the first ones in the manifest.
    let mut order: Vec<usize> = (0..N_QUIZZES).collect();
    order.sort_by_key(|&i| (i * 7) % N_QUIZZES);
    let quizzes: Vec<CourseQuiz> = order.into_iter().map(|i| quizzes[i].clone()).collect();
    let spare = TOP_K - n_planted;
    let unplanted: Vec<String> = quizzes
        .iter()
        .map(|q| q.quiz.quiz_id.clone())
        .filter(|id| !planted.contains(id))
        .collect();
    let cohorts = (0..3)
        .map(|c| SynthCohort {
            label: format!("Cohort {}", c + 1),
            n_students,
            shifted: unplanted[c * spare..(c + 1) * spare].to_vec(),
            shift: 4.0,
        })
        .collect();
    Some(SynthCourse {
        course_type: course_type.to_string(),
        seed,
        quizzes,
        cohorts,
        attempt_noise: 0.2,
        missingness: 0.02,
        planted,
    })
}
