use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::json;

use topicmine::consensus::{consensus as run_consensus, ConsensusParams, ConsensusReport};
use topicmine::corpus::CourseManifest;
use topicmine::difficulty::{
    most_common_incorrect, question_difficulty, quiz_difficulty, rank_quizzes, AveragingMode,
    CohortRanking, DifficultyError, RankingFile,
};
use topicmine::ingest::{
    derive_first_attempts, enrollment_mismatches, load_question_bank, partition_by_cohort,
    EventLogParser, FirstAttemptTable, QuestionBank, ResponseType,
};
use topicmine::irt::{
    fit_rasch, rank_quizzes_by_irt, validate_rankings, FitConfig, FitDiagnostics, IrtReport,
    ResponseMatrix,
};
use topicmine::llm::{
    build_misconception_prompt, build_synopsis_prompt, compute_cost, default_pricing, load_pricing,
    record_usage, run_batch, BatchItem, HttpConfig, HttpProvider, LlmError, MockProvider,
    PricingTable, PromptBundle, Provider, RetryPolicy, StructuredOutput, SynopsisResult,
    UsageLedger,
};
use topicmine::report::rubric::worksheet_to_tsv;
use topicmine::report::{
    assemble_report, render_markdown, rubric_worksheet, to_json, MisconceptionOutcome,
};
use topicmine::synth::{fixture_course, write_course, SynthCourse, FIXTURE_COURSES};

use crate::artifacts::{self as art, invalid, provider, RunDir, RunInfo};
use crate::{
    Averaging, ConsensusArgs, CostArgs, DifficultyArgs, IngestArgs, IrtArgs, ProviderArgs,
    ReportArgs, SynthArgs,
};

/// What a finished stage reports; a nonzero code means outputs were written but some items failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub details: serde_json::Value,
    pub exit_code: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstAttemptFile {
    pub cohorts: BTreeMap<String, FirstAttemptTable>,
}

impl FirstAttemptFile {
    fn merged(&self) -> FirstAttemptTable {
        FirstAttemptTable::merged(self.cohorts.values())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DifficultyFile {
    #[serde(default)]
    pub averaging_mode: AveragingMode,
    #[serde(default)]
    pub exclude_dragdrop: bool,
    pub rankings: Vec<CohortRanking>,
    /// Rounded view of `rankings` for reading.
    #[serde(default)]
    pub ranking_tables: Vec<RankingFile>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SynopsisFile {
    pub results: BTreeMap<String, SynopsisResult>,
    pub failures: BTreeMap<String, String>,
}

fn default_logs(manifest: &Path) -> Result<Vec<PathBuf>> {
    let dir = manifest.parent().unwrap_or(Path::new(".")).join("logs");
    let mut logs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| {
            invalid(format!(
                "no --log given and {} is unreadable: {e}",
                dir.display()
            ))
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    logs.sort();
    if logs.is_empty() {
        return Err(invalid(format!(
            "no --log given and no *.jsonl files in {}",
            dir.display()
        )));
    }
    Ok(logs)
}

pub fn ingest(run: &RunDir, args: &IngestArgs) -> Result<Outcome> {
    let manifest_path = std::fs::canonicalize(&args.manifest)
        .map_err(|e| invalid(format!("manifest {}: {e}", args.manifest.display())))?;
    let manifest = topicmine::load_manifest(&manifest_path)
        .map_err(|e| invalid(format!("manifest {}: {e}", manifest_path.display())))?;
    let issues = manifest.validate();
    if !issues.is_empty() {
        let text: Vec<String> = issues.iter().map(|i| format!("{i:?}")).collect();
        return Err(invalid(format!(
            "manifest {}: {}",
            manifest_path.display(),
            text.join("; ")
        )));
    }
    let bank = load_question_bank(&manifest).map_err(invalid)?;
    let logs = if args.logs.is_empty() {
        default_logs(&manifest_path)?
    } else {
        args.logs.clone()
    };

    let mut parser = EventLogParser::new();
    let mut events = Vec::new();
    let mut rejects = BTreeMap::new();
    for path in &logs {
        let file = std::fs::File::open(path)
            .map_err(|e| invalid(format!("log {}: {e}", path.display())))?;
        let (ev, rej) = parser
            .parse(BufReader::new(file))
            .map_err(|e| provider(format!("log {}: {e}", path.display())))?;
        events.extend(ev);
        if !rej.is_empty() {
            rejects.insert(path.display().to_string(), rej);
        }
    }
    let n_events = events.len();
    let (by_cohort, unassigned) = partition_by_cohort(events, &manifest);
    let tables: BTreeMap<String, FirstAttemptTable> = by_cohort
        .iter()
        .map(|(label, evs)| (label.clone(), derive_first_attempts(evs, &manifest, &bank)))
        .collect();

    let mut warnings = Vec::new();
    for m in enrollment_mismatches(&manifest, &tables) {
        warnings.push(format!(
            "cohort {}: manifest declares {} students, logs show {}",
            m.cohort, m.declared, m.observed
        ));
    }
    if unassigned > 0 {
        warnings.push(format!(
            "{unassigned} events belong to runs outside the manifest"
        ));
    }
    let n_rejects: usize = rejects.values().map(Vec::len).sum();
    if n_rejects > 0 {
        warnings.push(format!("{n_rejects} log lines were quarantined"));
    }
    let cohort_details: BTreeMap<String, serde_json::Value> = tables
        .iter()
        .map(|(l, t)| {
            (
                l.clone(),
                json!({"students": t.rows.len(), "first_attempts": t.len(), "unscored": t.unscored.len(),
                       "dropped_non_manifest": t.dropped_non_manifest}),
            )
        })
        .collect();

    let mut outputs = vec![
        run.write(
            art::RUN,
            &RunInfo {
                manifest: manifest_path,
            },
        )?,
        run.write(art::QUESTIONS, &bank)?,
        run.write(art::FIRST_ATTEMPTS, &FirstAttemptFile { cohorts: tables })?,
    ];
    if !rejects.is_empty() {
        outputs.push(run.write("rejects.json", &rejects)?);
    }
    Ok(Outcome {
        outputs,
        warnings,
        details: json!({"logs": logs.len(), "events": n_events, "rejected_lines": n_rejects,
                        "unassigned_events": unassigned, "questions": bank.len(), "cohorts": cohort_details}),
        exit_code: 0,
    })
}

fn cohort_ranking(
    label: &str,
    table: &FirstAttemptTable,
    manifest: &CourseManifest,
    bank: &QuestionBank,
    mode: AveragingMode,
    exclude_dragdrop: bool,
    top_k: usize,
    warnings: &mut Vec<String>,
) -> Result<CohortRanking> {
    let mut stats = Vec::new();
    for qid in manifest.question_ids() {
        if exclude_dragdrop
            && bank
                .get(qid)
                .is_some_and(|q| q.response_type == ResponseType::DragAndDrop)
        {
            continue;
        }
        match question_difficulty(table, qid) {
            Ok(s) => stats.push(s),
            Err(DifficultyError::NoAttempts(_)) => {}
            Err(e) => return Err(invalid(e)),
        }
    }
    let mut quizzes = Vec::new();
    for quiz in &manifest.quizzes {
        let topic = quiz
            .topic()
            .map_err(|e| invalid(format!("quiz {}: {e}", quiz.quiz_id)))?;
        match quiz_difficulty(&stats, quiz, topic, mode) {
            Ok(q) => quizzes.push(q),
            Err(DifficultyError::EmptyQuiz(id)) => warnings.push(format!(
                "cohort {label}: quiz {id} has no scored first attempts and is not ranked"
            )),
            Err(e) => return Err(invalid(e)),
        }
    }
    Ok(rank_quizzes(label, quizzes, top_k))
}

pub fn difficulty(run: &RunDir, args: &DifficultyArgs) -> Result<Outcome> {
    if args.top_k == 0 {
        return Err(invalid("--top-k must be at least 1"));
    }
    let manifest = run.manifest()?;
    let bank: QuestionBank = run.read(art::QUESTIONS, "ingest")?;
    let fa: FirstAttemptFile = run.read(art::FIRST_ATTEMPTS, "ingest")?;
    let mode = match args.averaging_mode {
        Averaging::PerQuestion => AveragingMode::PerQuestion,
        Averaging::Pooled => AveragingMode::Pooled,
    };
    let mut warnings = Vec::new();
    let mut rankings = Vec::new();
    for cohort in &manifest.cohorts {
        let table = fa.cohorts.get(&cohort.label).cloned().unwrap_or_default();
        rankings.push(cohort_ranking(
            &cohort.label,
            &table,
            &manifest,
            &bank,
            mode,
            args.exclude_dragdrop,
            args.top_k,
            &mut warnings,
        )?);
    }
    let details = json!({
        "cohorts": rankings.iter().map(|r| json!({
            "cohort": r.cohort_label,
            "ranked_quizzes": r.ranked.len(),
            "top_k": r.top_k().iter().map(|q| q.quiz_id.clone()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    let file = DifficultyFile {
        averaging_mode: mode,
        exclude_dragdrop: args.exclude_dragdrop,
        ranking_tables: rankings.iter().map(RankingFile::from).collect(),
        rankings,
    };
    Ok(Outcome {
        outputs: vec![run.write(art::DIFFICULTY, &file)?],
        warnings,
        details,
        exit_code: 0,
    })
}

pub fn consensus(run: &RunDir, args: &ConsensusArgs) -> Result<Outcome> {
    let manifest = run.manifest()?;
    let diff: DifficultyFile = run.read(art::DIFFICULTY, "difficulty")?;
    let params = ConsensusParams {
        top_k: args.top_k,
        min_cohort_support: args.min_support,
        min_questions_per_quiz: args.min_questions,
    };
    let report = run_consensus(&diff.rankings, &manifest, &params).map_err(invalid)?;
    let details = json!({
        "identified": report.summary.identified,
        "persistent": report.summary.persistent,
        "percent_persistent": report.summary.percent_persistent,
        "question_count": report.total_questions(),
        "topics": report.topics.iter().map(|t| json!({
            "topic": t.topic.as_str(), "support": t.cohort_support, "questions": t.question_count,
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        outputs: vec![run.write(art::CONSENSUS, &report)?],
        details,
        ..Outcome::default()
    })
}

pub fn irt_validate(run: &RunDir, args: &IrtArgs) -> Result<Outcome> {
    let manifest = run.manifest()?;
    let bank: QuestionBank = run.read(art::QUESTIONS, "ingest")?;
    let fa: FirstAttemptFile = run.read(art::FIRST_ATTEMPTS, "ingest")?;
    let merged = fa.merged();
    let config = FitConfig {
        tolerance: args.tolerance,
        max_iters: args.max_iters,
        prior_sd_theta: args.prior_sd_theta,
        prior_sd_b: args.prior_sd_b,
        seed: args.seed,
    };
    let keep = |qid: &str| {
        !(args.exclude_dragdrop
            && bank
                .get(qid)
                .is_some_and(|q| q.response_type == ResponseType::DragAndDrop))
    };
    let items: Vec<String> = manifest
        .question_ids()
        .filter(|q| keep(q))
        .map(String::from)
        .collect();
    let matrix = ResponseMatrix::from_first_attempts(&merged, &items).pruned();
    let fit = fit_rasch(&matrix, &config).map_err(invalid)?;
    let irt_rank = rank_quizzes_by_irt(&fit, &manifest).map_err(invalid)?;

    let mut warnings = Vec::new();
    let ctt = cohort_ranking(
        "all cohorts",
        &merged,
        &manifest,
        &bank,
        AveragingMode::PerQuestion,
        args.exclude_dragdrop,
        1,
        &mut warnings,
    )?;
    let irt_order: Vec<String> = irt_rank.iter().map(|q| q.quiz_id.clone()).collect();
    let ctt_order: Vec<String> = ctt
        .ranked
        .iter()
        .map(|q| q.quiz_id.clone())
        .filter(|q| irt_order.contains(q))
        .collect();
    let validation = validate_rankings(&ctt_order, &irt_order).map_err(invalid)?;
    if !fit.converged {
        warnings.push(format!(
            "Rasch fit stopped after {} iterations with gradient {:.3e}",
            fit.iterations, fit.grad_max_norm
        ));
    }
    let report = IrtReport {
        config,
        diagnostics: FitDiagnostics::new(&fit, &matrix),
        item_difficulty: fit.item_difficulty,
        quiz_mean_difficulty: irt_rank,
        validation,
    };
    let details = json!({
        "rho": report.validation.rho,
        "p_value": report.validation.p_value,
        "n_quizzes": report.validation.n,
        "converged": report.diagnostics.converged,
        "iterations": report.diagnostics.iterations,
    });
    Ok(Outcome {
        outputs: vec![run.write(art::IRT, &report)?],
        warnings,
        details,
        exit_code: 0,
    })
}

fn make_provider(
    args: &ProviderArgs,
    manifest: &CourseManifest,
) -> Result<(Box<dyn Provider>, RetryPolicy)> {
    if args.parallelism == 0 {
        return Err(invalid("--parallelism must be at least 1"));
    }
    if args.mock {
        let dir = args
            .mock_dir
            .clone()
            .unwrap_or_else(|| manifest.resolve(Path::new("mock")));
        if !dir.is_dir() {
            return Err(invalid(format!(
                "mock fixture directory {} does not exist",
                dir.display()
            )));
        }
        return Ok((
            Box::new(MockProvider::from_dir(dir)),
            RetryPolicy::no_wait(),
        ));
    }
    let config = HttpConfig {
        endpoint: args.endpoint.clone(),
        api_key_env: args.api_key_env.clone(),
        ..HttpConfig::default()
    };
    let p = HttpProvider::from_env(config).map_err(|e| provider(LlmError::from_provider(e, 0)))?;
    Ok((Box::new(p), RetryPolicy::default()))
}

fn pricing(path: Option<&Path>) -> Result<PricingTable> {
    match path {
        Some(p) => load_pricing(p).map_err(invalid),
        None => Ok(default_pricing()),
    }
}

fn apply_overrides(bundle: &mut PromptBundle, args: &ProviderArgs, course: &str) {
    if let Some(m) = &args.model {
        bundle.model_params.model_name = m.clone();
    }
    if let Some(t) = args.temperature {
        bundle.model_params.temperature = t;
    }
    bundle.provenance.course = Some(course.to_string());
}

fn save_prompts(run: &RunDir, bundles: &[PromptBundle]) -> Result<Vec<String>> {
    bundles
        .iter()
        .map(|b| run.write_str(&format!("prompts/{}.txt", b.key()), &(b.to_text() + "\n")))
        .collect()
}

/// Exit 2 when any call failed; outputs are still written so downstream stages can report the gaps.
fn batch_exit(items: &[BatchItem], warnings: &mut Vec<String>) -> u8 {
    let mut code = 0;
    for item in items {
        if let Err(e) = &item.result {
            warnings.push(format!("{}: {e}", item.key));
            code = 2;
        }
    }
    code
}

fn transcripts_for(
    manifest: &CourseManifest,
    quiz_ids: impl Fn(&str) -> bool,
) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for quiz in manifest.quizzes.iter().filter(|q| quiz_ids(&q.quiz_id)) {
        out.extend(manifest.quiz_transcripts(quiz).map_err(invalid)?);
    }
    Ok(out)
}

pub fn synopses(run: &RunDir, args: &ProviderArgs) -> Result<Outcome> {
    let manifest = run.manifest()?;
    let cons: ConsensusReport = run.read(art::CONSENSUS, "consensus")?;
    let mut bundles = Vec::new();
    let mut failures = BTreeMap::new();
    for topic in &cons.topics {
        let transcripts = transcripts_for(&manifest, |q| topic.quiz_ids.contains(q))?;
        match build_synopsis_prompt(topic.topic.as_str(), &transcripts) {
            Ok(mut b) => {
                apply_overrides(&mut b, args, &manifest.course_type);
                bundles.push(b);
            }
            Err(e) => {
                failures.insert(topic.topic.as_str().to_string(), e.to_string());
            }
        }
    }
    let (prov, policy) = make_provider(args, &manifest)?;
    let mut outputs = Vec::new();
    if args.save_prompts {
        outputs.extend(save_prompts(run, &bundles)?);
    }
    let items = run_batch(prov.as_ref(), &bundles, &policy, args.parallelism);
    let mut warnings: Vec<String> = failures
        .iter()
        .map(|(t, e)| format!("topic {t}: {e}"))
        .collect();
    let mut exit_code = batch_exit(&items, &mut warnings);
    if !failures.is_empty() {
        exit_code = exit_code.max(1);
    }
    let mut file = SynopsisFile {
        failures,
        ..SynopsisFile::default()
    };
    for item in &items {
        let topic = item.provenance.topic.clone().unwrap_or_default();
        match &item.result {
            Ok(c) => match &c.output {
                StructuredOutput::Synopsis(s) => {
                    file.results.insert(topic, s.clone());
                }
                other => {
                    file.failures
                        .insert(topic, format!("unexpected output {other:?}"));
                }
            },
            Err(e) => {
                file.failures.insert(topic, e.to_string());
            }
        }
    }
    let mut ledger = UsageLedger::new(pricing(args.pricing.as_deref())?);
    record_usage(&mut ledger, &items);
    let details = json!({
        "topics": cons.topics.len(),
        "completed": file.results.len(),
        "failed": file.failures.len(),
        "re_requested": items.iter().filter(|i| i.result.as_ref().is_ok_and(|c| c.re_requested)).count(),
        "mock": args.mock,
    });
    outputs.push(run.write(art::SYNOPSES, &file)?);
    outputs.push(run.write(art::SYNOPSES_USAGE, &ledger)?);
    Ok(Outcome {
        outputs,
        warnings,
        details,
        exit_code,
    })
}

pub fn misconceptions(run: &RunDir, args: &ProviderArgs) -> Result<Outcome> {
    let manifest = run.manifest()?;
    let cons: ConsensusReport = run.read(art::CONSENSUS, "consensus")?;
    let bank: QuestionBank = run.read(art::QUESTIONS, "ingest")?;
    let fa: FirstAttemptFile = run.read(art::FIRST_ATTEMPTS, "ingest")?;
    let merged = fa.merged();

    let mut outcomes: BTreeMap<String, MisconceptionOutcome> = BTreeMap::new();
    let mut pending = BTreeMap::new();
    let mut bundles = Vec::new();
    let mut excluded = 0;
    for topic in &cons.topics {
        for qid in &topic.question_ids {
            let question = bank.get(qid).ok_or_else(|| {
                invalid(format!("question {qid} is missing from {}", art::QUESTIONS))
            })?;
            if question.response_type == ResponseType::DragAndDrop {
                excluded += 1;
                continue;
            }
            let top = match most_common_incorrect(&merged, question) {
                Ok(t) => t,
                Err(e) => {
                    outcomes.insert(
                        qid.clone(),
                        MisconceptionOutcome::Skipped {
                            reason: e.to_string(),
                        },
                    );
                    continue;
                }
            };
            let quiz = manifest.quiz_of_question(qid).map(|q| q.quiz_id.clone());
            let transcripts = transcripts_for(&manifest, |q| quiz.as_deref() == Some(q))?;
            match build_misconception_prompt(question, &top, &transcripts) {
                Ok(mut b) => {
                    apply_overrides(&mut b, args, &manifest.course_type);
                    b.provenance.quiz_id = quiz;
                    b.provenance.topic = Some(topic.topic.as_str().to_string());
                    pending.insert(qid.clone(), top);
                    bundles.push(b);
                }
                Err(e) => {
                    outcomes.insert(
                        qid.clone(),
                        MisconceptionOutcome::Failed {
                            top_incorrect: Some(top),
                            error: e.to_string(),
                        },
                    );
                }
            }
        }
    }
    let (prov, policy) = make_provider(args, &manifest)?;
    let mut outputs = Vec::new();
    if args.save_prompts {
        outputs.extend(save_prompts(run, &bundles)?);
    }
    let items = run_batch(prov.as_ref(), &bundles, &policy, args.parallelism);
    let mut warnings = Vec::new();
    let exit_code = batch_exit(&items, &mut warnings);
    for item in &items {
        let qid = item.provenance.question_id.clone().unwrap_or_default();
        let top = pending.remove(&qid);
        let outcome = match (&item.result, top) {
            (Ok(c), Some(top)) => match &c.output {
                StructuredOutput::Misconception(r) => MisconceptionOutcome::Completed {
                    top_incorrect: top,
                    result: r.clone(),
                },
                other => MisconceptionOutcome::Failed {
                    top_incorrect: Some(top),
                    error: format!("unexpected output {other:?}"),
                },
            },
            (Err(e), top) => MisconceptionOutcome::Failed {
                top_incorrect: top,
                error: e.to_string(),
            },
            (Ok(_), None) => MisconceptionOutcome::Failed {
                top_incorrect: None,
                error: "duplicate provider result".into(),
            },
        };
        outcomes.insert(qid, outcome);
    }
    let mut ledger = UsageLedger::new(pricing(args.pricing.as_deref())?);
    record_usage(&mut ledger, &items);
    let count = |f: fn(&MisconceptionOutcome) -> bool| outcomes.values().filter(|o| f(o)).count();
    let details = json!({
        "questions": cons.total_questions(),
        "completed": count(|o| matches!(o, MisconceptionOutcome::Completed { .. })),
        "failed": count(|o| matches!(o, MisconceptionOutcome::Failed { .. })),
        "skipped": count(|o| matches!(o, MisconceptionOutcome::Skipped { .. })),
        "excluded_drag_and_drop": excluded,
        "mock": args.mock,
    });
    outputs.push(run.write(art::MISCONCEPTIONS, &outcomes)?);
    outputs.push(run.write(art::MISCONCEPTIONS_USAGE, &ledger)?);
    Ok(Outcome {
        outputs,
        warnings,
        details,
        exit_code,
    })
}

fn load_ledgers(paths: &[PathBuf], pricing_path: Option<&Path>) -> Result<UsageLedger> {
    let mut ledger = UsageLedger::default();
    for p in paths {
        ledger.extend(UsageLedger::load(p).map_err(invalid)?);
    }
    if let Some(p) = pricing_path {
        ledger.pricing = load_pricing(p).map_err(invalid)?;
    } else if ledger.pricing.is_empty() {
        ledger.pricing = default_pricing();
    }
    Ok(ledger)
}

pub fn report(run: &RunDir, args: &ReportArgs) -> Result<Outcome> {
    let cons: ConsensusReport = run.read(art::CONSENSUS, "consensus")?;
    let bank: QuestionBank = run.read(art::QUESTIONS, "ingest")?;
    let synopses: SynopsisFile = run.read(art::SYNOPSES, "synopses")?;
    let outcomes: BTreeMap<String, MisconceptionOutcome> =
        run.read(art::MISCONCEPTIONS, "misconceptions")?;
    let irt: Option<IrtReport> = if run.has(art::IRT) {
        Some(run.read(art::IRT, "irt-validate")?)
    } else {
        None
    };
    for name in [art::SYNOPSES_USAGE, art::MISCONCEPTIONS_USAGE] {
        if !run.has(name) {
            return Err(invalid(format!(
                "missing upstream artifact {}",
                run.path(name).display()
            )));
        }
    }
    let ledger = load_ledgers(
        &[
            run.path(art::SYNOPSES_USAGE),
            run.path(art::MISCONCEPTIONS_USAGE),
        ],
        args.pricing.as_deref(),
    )?;
    let report = assemble_report(
        &cons,
        &synopses.results,
        &bank,
        &outcomes,
        irt.as_ref().map(|r| &r.validation),
        &ledger,
    )
    .map_err(|e| match e {
        topicmine::report::ReportError::IncompleteInputs(v) => {
            invalid(format!("incomplete inputs: {}", v.join("; ")))
        }
        other => invalid(other),
    })?;
    let sheet = rubric_worksheet(&report);
    let mut warnings = Vec::new();
    if irt.is_none() {
        warnings.push("no irt.json; the report omits ranking validation".to_string());
    }
    let details = json!({
        "topics": report.topics.len(),
        "question_entries": report.question_count(),
        "failures": report.failure_count(),
        "exclusions": report.exclusion_count(),
        "consensus_question_count": cons.total_questions(),
        "worksheet_rows": sheet.rows.len(),
        "grand_total_usd": report.usage.grand_total_display(),
    });
    let outputs = vec![
        run.write_str(art::REPORT_MD, &render_markdown(&report))?,
        run.write_str(art::REPORT_JSON, &(to_json(&report) + "\n"))?,
        run.write_str(art::WORKSHEET, &worksheet_to_tsv(&sheet))?,
    ];
    Ok(Outcome {
        outputs,
        warnings,
        details,
        exit_code: 0,
    })
}

pub fn cost(args: &CostArgs) -> Result<Outcome> {
    let ledgers = if !args.ledgers.is_empty() {
        args.ledgers.clone()
    } else if let Some(dir) = &args.run_dir {
        let paths: Vec<PathBuf> = [art::SYNOPSES_USAGE, art::MISCONCEPTIONS_USAGE]
            .iter()
            .map(|n| dir.join(n))
            .filter(|p| p.is_file())
            .collect();
        if paths.is_empty() {
            return Err(invalid(format!("no usage ledgers in {}", dir.display())));
        }
        paths
    } else {
        return Err(invalid("give --ledger or --run-dir"));
    };
    let ledger = load_ledgers(&ledgers, args.pricing.as_deref())?;
    let report = compute_cost(&ledger).map_err(invalid)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "{:<32} {:>12} {:>12} {:>12} {:>10}",
            "Model", "Input", "Output", "Total", "Cost (USD)"
        );
        for (model, t) in &report.per_model {
            println!(
                "{model:<32} {:>12} {:>12} {:>12} {:>10}",
                t.input_tokens,
                t.output_tokens,
                t.total_tokens(),
                report.display(t.cost)
            );
        }
        if report.per_course.keys().any(|c| !c.is_empty()) {
            println!();
            println!(
                "{:<32} {:>12} {:>12} {:>12} {:>10}",
                "Course", "Input", "Output", "Total", "Cost (USD)"
            );
            for (course, t) in &report.per_course {
                let name = if course.is_empty() {
                    "(unlabeled)"
                } else {
                    course
                };
                println!(
                    "{name:<32} {:>12} {:>12} {:>12} {:>10}",
                    t.input_tokens,
                    t.output_tokens,
                    t.total_tokens(),
                    report.display(t.cost)
                );
            }
        }
        println!();
        println!("Grand total: {}", report.grand_total_display());
    }
    let details = json!({
        "ledgers": ledgers.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "grand_total_usd": report.grand_total_display(),
        "input_tokens": report.grand_total.input_tokens,
        "output_tokens": report.grand_total.output_tokens,
    });
    Ok(Outcome {
        details,
        ..Outcome::default()
    })
}

pub fn synth(args: &SynthArgs) -> Result<Outcome> {
    let mut courses: Vec<(PathBuf, SynthCourse)> = Vec::new();
    match args.fixture.as_deref() {
        Some("all") => {
            for name in FIXTURE_COURSES {
                let c = fixture_course(name, args.seed, args.students).expect("known fixture");
                courses.push((args.out.join(name), c));
            }
        }
        Some(name) => {
            let c = fixture_course(name, args.seed, args.students).ok_or_else(|| {
                invalid(format!(
                    "unknown fixture {name:?}; expected one of {} or all",
                    FIXTURE_COURSES.join(", ")
                ))
            })?;
            courses.push((args.out.clone(), c));
        }
        None => {
            let c = SynthCourse::planted_standard(
                &args.course_type,
                args.seed,
                args.cohorts,
                args.students,
                args.quizzes,
                args.questions_per_quiz,
                &args.plant,
                args.delta_b,
            )
            .map_err(invalid)?;
            courses.push((args.out.clone(), c));
        }
    }
    let mut details = Vec::new();
    for (dir, mut course) in courses {
        if let Some(m) = args.missingness {
            course.missingness = m;
        }
        if let Some(n) = args.attempt_noise {
            course.attempt_noise = n;
        }
        let layout = write_course(&course, &dir).map_err(|e| match e {
            topicmine::synth::SynthError::Io(m) => provider(m),
            other => invalid(other),
        })?;
        details.push(json!({
            "course_type": course.course_type,
            "dir": dir.display().to_string(),
            "manifest": layout.manifest.display().to_string(),
            "cohorts": layout.logs.len(),
            "quizzes": course.quizzes.len(),
            "planted": course.planted,
        }));
    }
    Ok(Outcome {
        details: json!({ "courses": details }),
        ..Outcome::default()
    })
}
