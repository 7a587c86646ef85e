//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use topicmine::consensus::{consensus, ConsensusParams, ConsensusReport};
use topicmine::difficulty::{
    question_difficulty, quiz_difficulty, rank_quizzes, AveragingMode, CohortRanking,
    MostCommonIncorrect, QuestionStat,
};
use topicmine::irt::{
    fit_rasch, rank_quizzes_by_irt, spearman_scores, validate_rankings, FitConfig, ResponseMatrix,
};
use topicmine::llm::{load_pricing, StructuredOutput, UsageEntry};
use topicmine::report::rubric::import_worksheet;
use topicmine::synth::{below, generate_event_log, question_xml, rng, SynthKind};
use topicmine::{
    build_misconception_prompt, build_synopsis_prompt, complete_structured, compute_cost,
    derive_first_attempts, fixture_course, generate_rasch_responses, parse_event_log,
    parse_problem_xml, score_response, CourseManifest, MockProvider, QuestionBank, QuestionRecord,
    ResponsePayload, ResponseType, RetryPolicy, SynthCourse, UsageLedger,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let elapsed = start.elapsed();
    if elapsed > limit {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn topicmine(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_topicmine"))
        .args(args)
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`topicmine {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn consensus_reproduction() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for name in ["manifest.json", "difficulty.json", "run.json"] {
        std::fs::copy(fixtures().join("immunology_rankings").join(name), dir.path().join(name))
            .map_err(|e| e.to_string())?;
    }
    topicmine(&["consensus", "--run-dir", p(dir.path())])?;
    let report: ConsensusReport = serde_json::from_str(&read(&dir.path().join("consensus.json"))?)
        .map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(1))?;

    let expected: BTreeMap<&str, (usize, usize)> = [
        ("Novel Immune Therapies", (3, 5)),
        ("Costimulation and The Two Signal Requirement", (3, 6)),
        (
            "Immunological Barriers to Transplantation and Transfusion",
            (3, 4),
        ),
        ("Response of Sentinel Cells", (3, 2)),
        ("Innate Recognition of Microbes", (3, 5)),
        ("The Germinal Center Reaction", (3, 3)),
        ("Immunodeficiencies", (2, 3)),
    ]
    .into_iter()
    .collect();
    let got: BTreeMap<&str, (usize, usize)> = report
        .topics
        .iter()
        .map(|t| (t.topic.as_str(), (t.cohort_support, t.question_count)))
        .collect();
    ensure!(got == expected, "topics {got:?}");
    let supports: Vec<usize> = report.topics.iter().map(|t| t.cohort_support).collect();
    ensure!(
        supports == [3, 3, 3, 3, 3, 3, 2],
        "support order {supports:?}"
    );
    ensure!(
        report.total_questions() == 28,
        "total questions {}",
        report.total_questions()
    );
    let s = report.summary;
    ensure!(
        (s.identified, s.persistent, s.percent_persistent) == (13, 7, 54),
        "summary {} -> {} ({}%)",
        s.identified,
        s.persistent,
        s.percent_persistent
    );
    Ok(format!(
        "7 topics, supports {supports:?}, 28 questions, 13 -> 7 (54%) in {:.0?}",
        start.elapsed()
    ))
}

fn cost_reproduction() -> Outcome {
    let start = Instant::now();
    let pricing = load_pricing(fixtures().join("pricing.json")).map_err(|e| e.to_string())?;
    let cases: [(&str, [(&str, &str); 5], &str); 2] = [
        (
            "misconception_usage.json",
            [
                ("Biochemistry", "0.18"),
                ("Genetics", "0.26"),
                ("Immunology", "0.23"),
                ("Pharmacology", "0.25"),
                ("Physiology", "0.14"),
            ],
            "1.06",
        ),
        (
            "synopsis_usage.json",
            [
                ("Biochemistry", "0.0017"),
                ("Genetics", "0.0023"),
                ("Immunology", "0.0021"),
                ("Pharmacology", "0.0023"),
                ("Physiology", "0.0016"),
            ],
            "0.0101",
        ),
    ];
    let mut totals = Vec::new();
    for (file, rows, grand) in cases {
        let path = fixtures().join(file);
        let entries: Vec<UsageEntry> = UsageLedger::load(&path).map_err(|e| e.to_string())?.entries;
        let mut ledger = UsageLedger::new(pricing.clone());
        for e in entries {
            ledger.append(e);
        }
        let report = compute_cost(&ledger).map_err(|e| e.to_string())?;
        for (course, want) in rows {
            let got = report
                .per_course
                .get(course)
                .map(|t| report.display(t.cost))
                .ok_or_else(|| format!("{file}: no row for {course}"))?;
            ensure!(got == want, "{file} {course}: {got} != {want}");
        }
        ensure!(
            report.grand_total_display() == grand,
            "{file} grand total {}",
            report.grand_total_display()
        );
        let stdout = topicmine(&[
            "cost",
            "--ledger",
            p(&path),
            "--pricing",
            p(&fixtures().join("pricing.json")),
        ])?;
        ensure!(
            stdout.contains(&format!("Grand total: {grand}")),
            "{file}: CLI output lacks grand total {grand}"
        );
        totals.push(grand);
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!(
        "all course rows match; grand totals {}",
        totals.join(" / ")
    ))
}

fn prompt_fidelity() -> Outcome {
    let dir = fixtures().join("immunotherapy");
    let question =
        parse_problem_xml(&read(&dir.join("problem.xml"))?, "nit-q1").map_err(|e| e.to_string())?;
    ensure!(
        question.correct_choices == [2],
        "correct choices {:?}",
        question.correct_choices
    );
    let top = MostCommonIncorrect {
        question_id: "nit-q1".into(),
        payload: ResponsePayload::Choices(vec![0]),
        count: 1,
        n_incorrect_total: 1,
    };
    let t1 = read(&dir.join("transcript.txt"))?;
    let t2 = read(&dir.join("transcript2.txt"))?;

    let misconception =
        build_misconception_prompt(&question, &top, &[&t1]).map_err(|e| e.to_string())?;
    let built = misconception.to_text() + "\n";
    let golden = read(&dir.join("golden_misconception.txt"))?;
    ensure!(
        built.as_bytes() == golden.as_bytes(),
        "misconception prompt differs: {}",
        first_diff(&built, &golden)
    );

    let synopsis =
        build_synopsis_prompt("Novel Immune Therapies", &[&t1, &t2]).map_err(|e| e.to_string())?;
    let built = synopsis.to_text() + "\n";
    let golden = read(&dir.join("golden_synopsis.txt"))?;
    ensure!(
        built.as_bytes() == golden.as_bytes(),
        "synopsis prompt differs: {}",
        first_diff(&built, &golden)
    );

    let provider = MockProvider::from_dir(dir.join("mock"));
    let done = complete_structured(&provider, &misconception, &RetryPolicy::no_wait())
        .map_err(|e| e.to_string())?;
    let StructuredOutput::Misconception(result) = done.output else {
        return Err("mock output is not a misconception result".into());
    };
    ensure!(
        result.misconceptions.len() == 3,
        "{} misconceptions",
        result.misconceptions.len()
    );
    Ok(format!(
        "misconception ({} bytes) and synopsis ({} bytes) prompts byte-identical",
        misconception.to_text().len() + 1,
        synopsis.to_text().len() + 1
    ))
}

fn first_diff(a: &str, b: &str) -> String {
    let at = a
        .bytes()
        .zip(b.bytes())
        .position(|(x, y)| x != y)
        .unwrap_or(a.len().min(b.len()));
    let line = a[..at.min(a.len())].lines().count();
    format!(
        "first difference at byte {at} (line {line}); lengths {} vs {}",
        a.len(),
        b.len()
    )
}

/// Per-question stats straight from a response matrix.
fn matrix_stats(m: &ResponseMatrix) -> Vec<QuestionStat> {
    (0..m.items.len())
        .filter_map(|i| {
            let obs: Vec<bool> = (0..m.students.len()).filter_map(|s| m.get(s, i)).collect();
            let n = obs.len() as u64;
            let c = obs.iter().filter(|&&x| x).count() as u64;
            (n > 0).then(|| QuestionStat {
                question_id: m.items[i].clone(),
                n_first_attempts: n,
                n_correct: c,
                p_correct: c as f64 / n as f64,
            })
        })
        .collect()
}

fn ctt_order(stats: &[QuestionStat], manifest: &CourseManifest) -> Result<Vec<String>, String> {
    let mut quizzes = Vec::new();
    for quiz in &manifest.quizzes {
        let topic = quiz.topic().map_err(|e| e.to_string())?;
        quizzes.push(
            quiz_difficulty(stats, quiz, topic, AveragingMode::PerQuestion)
                .map_err(|e| e.to_string())?,
        );
    }
    Ok(rank_quizzes("all", quizzes, 1)
        .ranked
        .into_iter()
        .map(|q| q.quiz_id)
        .collect())
}

fn irt_validation() -> Outcome {
    let start = Instant::now();
    let mut complete_exact = 0;
    let mut missing_ok = 0;
    let mut worst_missing = f64::INFINITY;
    let mut worst_recovery = f64::INFINITY;
    for seed in 0..10u64 {
        let course = SynthCourse::planted_standard("synthetic", seed, 1, 200, 40, 1, &[], 0.0)
            .map_err(|e| e.to_string())?;
        let manifest = course.manifest();
        for missingness in [0.0, 0.1] {
            let mut config = course.cohort_config(0).map_err(|e| e.to_string())?;
            config.missingness = missingness;
            let (matrix, truth) = generate_rasch_responses(&config).map_err(|e| e.to_string())?;
            let matrix = matrix.pruned();
            let fit = fit_rasch(
                &matrix,
                &FitConfig {
                    seed,
                    ..FitConfig::default()
                },
            )
            .map_err(|e| e.to_string())?;
            let irt: Vec<String> = rank_quizzes_by_irt(&fit, &manifest)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|q| q.quiz_id)
                .collect();
            let ctt = ctt_order(&matrix_stats(&matrix), &manifest)?;
            let rho = validate_rankings(&ctt, &irt)
                .map_err(|e| e.to_string())?
                .rho;

            let ids: Vec<&String> = truth.true_b.keys().collect();
            let fitted: Vec<f64> = ids.iter().map(|id| fit.item_difficulty[*id]).collect();
            let actual: Vec<f64> = ids.iter().map(|id| truth.true_b[*id]).collect();
            let recovery = spearman_scores(&fitted, &actual);
            worst_recovery = worst_recovery.min(recovery);
            ensure!(
                recovery >= 0.9,
                "seed {seed} missingness {missingness}: item recovery {recovery:.4}"
            );

            if missingness == 0.0 {
                ensure!(rho == 1.0, "seed {seed}: complete-data rho {rho}");
                complete_exact += 1;
            } else {
                worst_missing = worst_missing.min(rho);
                if rho >= 0.95 {
                    missing_ok += 1;
                }
            }
        }
    }
    ensure!(
        missing_ok >= 9,
        "10% missingness: rho >= 0.95 on only {missing_ok}/10 seeds"
    );
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "complete rho = 1.0 on {complete_exact}/10; 10% missing rho >= 0.95 on {missing_ok}/10 (min {worst_missing:.4}); \
         min item recovery {worst_recovery:.4}; {:.1?}",
        start.elapsed()
    ))
}

fn all_kinds() -> Vec<SynthKind> {
    vec![
        SynthKind::MultipleChoice,
        SynthKind::Checkbox,
        SynthKind::Dropdown,
        SynthKind::ShortAnswer,
    ]
}

fn ingestion_oracle() -> Outcome {
    let start = Instant::now();
    // (seed, students, quizzes, questions per quiz, missingness, attempt noise)
    let runs = [
        (0u64, 40, 8, 3, 0.0, 0.9),
        (1, 150, 20, 2, 0.1, 0.5),
        (2, 300, 30, 3, 0.05, 0.25),
        (3, 800, 40, 3, 0.0, 0.04),
    ];
    let mut events_total = 0;
    let mut largest = 0;
    let mut multi = 0;
    for (seed, students, quizzes, qpq, missingness, noise) in runs {
        let mut course =
            SynthCourse::planted_standard("synthetic", seed, 1, students, quizzes, qpq, &[], 0.0)
                .map_err(|e| e.to_string())?;
        course.missingness = missingness;
        course.attempt_noise = noise;
        for q in &mut course.quizzes {
            q.quiz.kinds = all_kinds();
        }
        let config = course.cohort_config(0).map_err(|e| e.to_string())?;
        let manifest = course.manifest();
        let bank: QuestionBank = course
            .questions()
            .into_iter()
            .map(|q| (q.question_id.clone(), q))
            .collect();
        let (matrix, mut truth) = generate_rasch_responses(&config).map_err(|e| e.to_string())?;
        let lines = generate_event_log(&matrix, &mut truth, &config).map_err(|e| e.to_string())?;
        let text: String = lines.iter().map(|l| l.to_json() + "\n").collect();
        let (events, rejects) = parse_event_log(&text);
        ensure!(
            rejects.is_empty(),
            "seed {seed}: {} rejected lines",
            rejects.len()
        );
        ensure!(
            events.len() <= 100_000,
            "seed {seed}: {} events exceeds the size bound",
            events.len()
        );
        events_total += events.len();
        largest = largest.max(events.len());
        multi += events.len() - matrix.n_observed();

        let table = derive_first_attempts(&events, &manifest, &bank);
        ensure!(
            table.unscored.is_empty(),
            "seed {seed}: unscored {:?}",
            &table.unscored[..1]
        );
        ensure!(
            table.dropped_non_manifest == 0,
            "seed {seed}: dropped events"
        );
        let derived: BTreeMap<&String, BTreeMap<&String, (&ResponsePayload, bool)>> = table
            .rows
            .iter()
            .map(|(s, row)| {
                (
                    s,
                    row.iter()
                        .map(|(q, fa)| (q, (&fa.event.response, fa.correct)))
                        .collect(),
                )
            })
            .collect();
        let expected: BTreeMap<&String, BTreeMap<&String, (&ResponsePayload, bool)>> = truth
            .first_attempts
            .iter()
            .map(|(s, row)| {
                (
                    s,
                    row.iter()
                        .map(|(q, t)| (q, (&t.response, t.correct)))
                        .collect(),
                )
            })
            .collect();
        ensure!(
            derived == expected,
            "seed {seed}: first-attempt table differs from ground truth"
        );
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "{} logs, {events_total} events (largest {largest}, {multi} repeat attempts) match ground truth; {:.1?}",
        runs.len(),
        start.elapsed()
    ))
}

fn rank_cohort(
    label: &str,
    events: &[topicmine::AttemptEvent],
    manifest: &CourseManifest,
    bank: &QuestionBank,
) -> Result<CohortRanking, String> {
    let table = derive_first_attempts(events, manifest, bank);
    let stats: Vec<QuestionStat> = manifest
        .question_ids()
        .filter_map(|q| question_difficulty(&table, q).ok())
        .collect();
    let mut quizzes = Vec::new();
    for quiz in &manifest.quizzes {
        let topic = quiz.topic().map_err(|e| e.to_string())?;
        quizzes.push(
            quiz_difficulty(&stats, quiz, topic, AveragingMode::PerQuestion)
                .map_err(|e| e.to_string())?,
        );
    }
    Ok(rank_quizzes(label, quizzes, 10))
}

fn planted_recovery() -> Outcome {
    let start = Instant::now();
    let mut recovered = 0;
    let mut misses = Vec::new();
    for seed in 0..10u64 {
        let mut r = rng(seed);
        let mut planted = BTreeSet::new();
        while planted.len() < 3 {
            planted.insert(format!("quiz{:02}", below(&mut r, 40) + 1));
        }
        let planted: Vec<String> = planted.into_iter().collect();
        let course = SynthCourse::planted_standard("synthetic", seed, 3, 250, 40, 3, &planted, 1.5)
            .map_err(|e| e.to_string())?;
        let manifest = course.manifest();
        let bank: QuestionBank = course
            .questions()
            .into_iter()
            .map(|q| (q.question_id.clone(), q))
            .collect();
        let mut rankings = Vec::new();
        for (i, cohort) in course.cohorts.iter().enumerate() {
            let config = course.cohort_config(i).map_err(|e| e.to_string())?;
            let (matrix, mut truth) =
                generate_rasch_responses(&config).map_err(|e| e.to_string())?;
            let lines =
                generate_event_log(&matrix, &mut truth, &config).map_err(|e| e.to_string())?;
            let text: String = lines.iter().map(|l| l.to_json() + "\n").collect();
            let (events, _) = parse_event_log(&text);
            rankings.push(rank_cohort(&cohort.label, &events, &manifest, &bank)?);
        }
        let report = consensus(&rankings, &manifest, &ConsensusParams::default())
            .map_err(|e| e.to_string())?;
        let persistent: BTreeSet<&str> = report.topics.iter().map(|t| t.topic.as_str()).collect();
        let mut missing = Vec::new();
        for id in &planted {
            let topic = manifest
                .quiz(id)
                .expect("planted quiz")
                .topic()
                .map_err(|e| e.to_string())?;
            if !persistent.contains(topic.as_str()) {
                missing.push(id.clone());
            }
        }
        if missing.is_empty() {
            recovered += 1;
        } else {
            misses.push(format!("seed {seed} missed {}", missing.join(",")));
        }
    }
    ensure!(
        recovered >= 9,
        "all planted quizzes persistent on only {recovered}/10 seeds ({})",
        misses.join("; ")
    );
    within(start, Duration::from_secs(60))?;
    let note = if misses.is_empty() {
        String::new()
    } else {
        format!(" ({})", misses.join("; "))
    };
    Ok(format!(
        "all planted quizzes persistent on {recovered}/10 seeds{note}; {:.1?}",
        start.elapsed()
    ))
}

fn random_checkbox(i: usize, draw: &mut impl FnMut(u64) -> u64) -> QuestionRecord {
    let n = draw(10) as usize + 1;
    let choices = (0..n).map(|c| format!("option {c} of item {i}")).collect();
    let mut correct: Vec<usize> = (0..n).filter(|_| draw(2) == 1).collect();
    if correct.is_empty() {
        correct.push(draw(n as u64) as usize);
    }
    QuestionRecord::new(
        format!("cb{i:04}"),
        format!("Select every true statement ({i})."),
        ResponseType::Checkbox,
        choices,
        correct,
        vec![],
        "",
    )
    .expect("valid checkbox record")
}

fn scoring_brute_force() -> Outcome {
    let mut r = rng(7);
    let mut draw = |n| below(&mut r, n);
    let mut corpus: Vec<QuestionRecord> = Vec::new();
    for i in 0..300 {
        // Round-trip through problem XML so the parser is covered too.
        let q = random_checkbox(i, &mut draw);
        corpus
            .push(parse_problem_xml(&question_xml(&q), &q.question_id).map_err(|e| e.to_string())?);
    }
    for name in topicmine::synth::FIXTURE_COURSES {
        let course = fixture_course(name, 0, 10).expect("fixture");
        corpus.extend(course.questions());
    }
    let mut checked = 0;
    let mut subsets = 0u64;
    for q in corpus
        .iter()
        .filter(|q| q.response_type == ResponseType::Checkbox && q.choices.len() <= 10)
    {
        let n = q.choices.len();
        let mut hits = Vec::new();
        for mask in 0u32..(1 << n) {
            let set: Vec<usize> = (0..n).filter(|b| mask & (1 << b) != 0).collect();
            if score_response(q, &ResponsePayload::Choices(set.clone()), None)
                .map_err(|e| e.to_string())?
            {
                hits.push(set);
            }
            subsets += 1;
        }
        ensure!(
            hits.len() == 1,
            "{}: {} subsets score correct",
            q.question_id,
            hits.len()
        );
        ensure!(
            hits[0] == q.correct_choices,
            "{}: scored set {:?}",
            q.question_id,
            hits[0]
        );
        checked += 1;
    }
    ensure!(checked > 0, "no checkbox questions in the corpus");
    Ok(format!(
        "{checked} checkbox questions, {subsets} subsets, exactly one correct each"
    ))
}

/// `### Question` headings plus items listed as failed or excluded.
fn question_entries(markdown: &str) -> usize {
    let mut count = 0;
    let mut in_list = false;
    for line in markdown.lines() {
        if line.starts_with("### Question ") {
            count += 1;
            in_list = false;
        } else if line == "**Questions without results:**" || line == "**Excluded questions:**" {
            in_list = true;
        } else if in_list && line.starts_with("- ") {
            count += 1;
        } else if !line.is_empty() {
            in_list = false;
        }
    }
    count
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("courses");
    topicmine(&["synth", "--fixture", "all", "--out", p(&out)])?;
    let expected_rows = [
        ("pharmacology", 36),
        ("genetics", 32),
        ("immunology", 28),
        ("biochemistry", 24),
        ("physiology", 20),
    ];
    let mut rows = Vec::new();
    for (course, want) in expected_rows {
        let root = out.join(course);
        let run = root.join("run");
        let run_s = p(&run);
        topicmine(&[
            "ingest",
            "--run-dir",
            run_s,
            "--manifest",
            p(&root.join("manifest.json")),
        ])?;
        for stage in [
            vec!["difficulty"],
            vec!["consensus"],
            vec!["irt-validate"],
            vec!["synopses", "--mock"],
            vec!["misconceptions", "--mock"],
            vec!["report"],
        ] {
            let mut args = stage.clone();
            args.extend(["--run-dir", run_s]);
            topicmine(&args)?;
        }
        let report: ConsensusReport =
            serde_json::from_str(&read(&run.join("consensus.json"))?).map_err(|e| e.to_string())?;
        let entries = question_entries(&read(&run.join("report.md"))?);
        ensure!(
            entries == report.total_questions(),
            "{course}: report has {entries} question entries, consensus counts {}",
            report.total_questions()
        );
        let worksheet = read(&run.join("worksheet.tsv"))?;
        let sheet =
            import_worksheet(&worksheet).map_err(|e| format!("{course}: worksheet: {e}"))?;
        let n = sheet.total_evaluated + sheet.unrated;
        ensure!(
            n == want,
            "{course}: worksheet has {n} rows, expected {want}"
        );
        rows.push(n.to_string());
    }
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "5 courses exit 0; worksheet rows {}; {:.1?}",
        rows.join("/"),
        start.elapsed()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("consensus reproduction", consensus_reproduction),
        ("cost reproduction", cost_reproduction),
        ("prompt fidelity", prompt_fidelity),
        ("IRT validation", irt_validation),
        ("ingestion oracle", ingestion_oracle),
        ("planted-topic recovery", planted_recovery),
        ("checkbox scoring brute force", scoring_brute_force),
        ("end-to-end mock run", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
