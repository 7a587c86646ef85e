//! Inputs shared by the benchmarks.

use topicmine::difficulty::{
    question_difficulty, quiz_difficulty, rank_quizzes, AveragingMode, CohortRanking,
};
use topicmine::irt::ResponseMatrix;
use topicmine::synth::generate_event_log;
use topicmine::{
    derive_first_attempts, generate_rasch_responses, AttemptEvent, CourseManifest, QuestionBank,
    SynthConfig, SynthCourse,
};

pub struct Workload {
    pub manifest: CourseManifest,
    pub bank: QuestionBank,
    pub events: Vec<AttemptEvent>,
    pub log_text: String,
    pub matrix: ResponseMatrix,
    pub rankings: Vec<CohortRanking>,
}

/// Three cohorts of `students` over 40 quizzes of 3 questions, 3 planted.
pub fn workload(students: usize) -> Workload {
    let planted = ["quiz05", "quiz17", "quiz33"].map(String::from);
    let course = SynthCourse::planted_standard("Bench", 1, 3, students, 40, 3, &planted, 1.5)
        .expect("valid course");
    let manifest = course.manifest();
    let bank: QuestionBank = course
        .questions()
        .into_iter()
        .map(|q| (q.question_id.clone(), q))
        .collect();
    let mut events = Vec::new();
    let mut log_text = String::new();
    let mut rankings = Vec::new();
    let mut matrix = None;
    for (i, cohort) in course.cohorts.iter().enumerate() {
        let config: SynthConfig = course.cohort_config(i).expect("cohort config");
        let (m, mut truth) = generate_rasch_responses(&config).expect("responses");
        let lines = generate_event_log(&m, &mut truth, &config).expect("log");
        let text: String = lines.iter().map(|l| l.to_json() + "\n").collect();
        let (ev, _) = topicmine::parse_event_log(&text);
        let table = derive_first_attempts(&ev, &manifest, &bank);
        let stats: Vec<_> = manifest
            .question_ids()
            .filter_map(|q| question_difficulty(&table, q).ok())
            .collect();
        let quizzes = manifest
            .quizzes
            .iter()
            .map(|q| {
                quiz_difficulty(
                    &stats,
                    q,
                    q.topic().expect("topic"),
                    AveragingMode::PerQuestion,
                )
                .expect("quiz")
            })
            .collect();
        rankings.push(rank_quizzes(cohort.label.clone(), quizzes, 10));
        matrix.get_or_insert(m);
        log_text.push_str(&text);
        events.extend(ev);
    }
    Workload {
        manifest,
        bank,
        events,
        log_text,
        matrix: matrix.expect("at least one cohort"),
        rankings,
    }
}
