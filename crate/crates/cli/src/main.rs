mod artifacts;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use artifacts::{exit_code, RunDir, StageSummary};

/// Find persistently challenging quiz topics across course cohorts and draft
/// misconception reports for them.
///
/// Stages hand off through JSON files in a run directory. Exit status: 0 on success,
/// 1 on invalid input or a missing upstream artifact, 2 on provider or I/O failure.
#[derive(Debug, Parser)]
#[command(name = "topicmine", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse event logs and problem XML into first-attempt tables.
    Ingest(IngestArgs),
    /// Rank quizzes by first-attempt score for each cohort.
    Difficulty(DifficultyArgs),
    /// Keep topics that rank among the hardest in enough cohorts.
    Consensus(ConsensusArgs),
    /// Fit a Rasch model and correlate its quiz ranking with the first-attempt ranking.
    IrtValidate(IrtArgs),
    /// Ask the provider for a synopsis of each persistent topic's lectures.
    Synopses(ProviderArgs),
    /// Ask the provider for likely misconceptions behind each question's top wrong answer.
    Misconceptions(ProviderArgs),
    /// Assemble the markdown and JSON report and the rating worksheet.
    Report(ReportArgs),
    /// Total provider usage cost from ledgers.
    Cost(CostArgs),
    /// Write a synthetic course (manifest, problems, transcripts, logs, mock fixtures).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct RunDirArg {
    /// Run directory holding stage inputs and outputs.
    #[arg(long, value_name = "DIR")]
    run_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    run: RunDirArg,
    /// Course manifest JSON.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Event log (JSON lines); repeatable. Defaults to every *.jsonl under <manifest dir>/logs.
    #[arg(long = "log", value_name = "FILE")]
    pub logs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Averaging {
    /// Mean of per-question proportions correct.
    PerQuestion,
    /// Correct first attempts over all first attempts in the quiz.
    Pooled,
}

#[derive(Debug, Args)]
pub struct DifficultyArgs {
    #[command(flatten)]
    run: RunDirArg,
    /// Number of hardest quizzes recorded as each cohort's top-k.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// How question scores combine into a quiz score.
    #[arg(long, value_enum, default_value_t = Averaging::PerQuestion)]
    pub averaging_mode: Averaging,
    /// Leave drag-and-drop questions out of quiz scores (they count when the log scores them).
    #[arg(long)]
    pub exclude_dragdrop: bool,
}

#[derive(Debug, Args)]
pub struct ConsensusArgs {
    #[command(flatten)]
    run: RunDirArg,
    /// Hardest quizzes considered per cohort.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Cohorts whose top-k must include the topic.
    #[arg(long, default_value_t = 2)]
    pub min_support: usize,
    /// Quizzes with fewer questions are skipped before taking the top-k.
    #[arg(long, default_value_t = 2)]
    pub min_questions: usize,
}

#[derive(Debug, Args)]
pub struct IrtArgs {
    #[command(flatten)]
    run: RunDirArg,
    /// Stop when the largest gradient component falls below this.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Iteration cap for the MAP fit.
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Prior standard deviation of student ability.
    #[arg(long, default_value_t = 1.0)]
    pub prior_sd_theta: f64,
    /// Prior standard deviation of item difficulty.
    #[arg(long, default_value_t = 3.0)]
    pub prior_sd_b: f64,
    /// Recorded with the fit; the fit is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leave drag-and-drop questions out of both rankings.
    #[arg(long)]
    pub exclude_dragdrop: bool,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    #[command(flatten)]
    run: RunDirArg,
    /// Serve responses from fixture files instead of calling the provider.
    #[arg(long)]
    pub mock: bool,
    /// Fixture directory for --mock. Defaults to <manifest dir>/mock.
    #[arg(long, value_name = "DIR")]
    pub mock_dir: Option<PathBuf>,
    /// Concurrent provider calls.
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    /// Chat-completions endpoint.
    #[arg(long, default_value = topicmine::llm::provider::DEFAULT_ENDPOINT)]
    pub endpoint: String,
    /// Environment variable holding the API credential.
    #[arg(long, default_value = topicmine::llm::provider::DEFAULT_API_KEY_ENV)]
    pub api_key_env: String,
    /// Override the stage's model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Override the stage's sampling temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Pricing table JSON (model -> USD per million input/output tokens). Defaults to built-in rates.
    #[arg(long, value_name = "FILE")]
    pub pricing: Option<PathBuf>,
    /// Also write every prompt to prompts/<key>.txt in the run directory.
    #[arg(long)]
    pub save_prompts: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    run: RunDirArg,
    /// Pricing table JSON; overrides rates stored in the usage ledgers.
    #[arg(long, value_name = "FILE")]
    pub pricing: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Usage ledger JSON; repeatable. Defaults to the ledgers in --run-dir.
    #[arg(long = "ledger", value_name = "FILE")]
    pub ledgers: Vec<PathBuf>,
    /// Pricing table JSON; overrides rates stored in the ledgers.
    #[arg(long, value_name = "FILE")]
    pub pricing: Option<PathBuf>,
    /// Run directory to read ledgers from and write the stage summary to.
    #[arg(long, value_name = "DIR")]
    pub run_dir: Option<PathBuf>,
    /// Print the full cost report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the course (or one subdirectory per course with --fixture all).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Write a preset course: pharmacology, genetics, immunology, biochemistry, physiology, or all.
    #[arg(long)]
    pub fixture: Option<String>,
    /// Base seed; cohort i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Students per cohort.
    #[arg(long, default_value_t = 200)]
    pub students: usize,
    /// Cohorts (ignored with --fixture).
    #[arg(long, default_value_t = 3)]
    pub cohorts: usize,
    /// Quizzes (ignored with --fixture).
    #[arg(long, default_value_t = 40)]
    pub quizzes: usize,
    /// Questions per quiz (ignored with --fixture).
    #[arg(long, default_value_t = 3)]
    pub questions_per_quiz: usize,
    /// Quiz ids made harder in every cohort, comma separated (ignored with --fixture).
    #[arg(long, value_delimiter = ',')]
    pub plant: Vec<String>,
    /// Difficulty shift added to planted quizzes.
    #[arg(long, default_value_t = 1.5)]
    pub delta_b: f64,
    /// Probability a student skips a question.
    #[arg(long)]
    pub missingness: Option<f64>,
    /// Probability of an extra, later attempt on a question.
    #[arg(long)]
    pub attempt_noise: Option<f64>,
    /// Course name written to the manifest (ignored with --fixture).
    #[arg(long, default_value = "Synthetic")]
    pub course_type: String,
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::Ingest(_) => "ingest",
        Command::Difficulty(_) => "difficulty",
        Command::Consensus(_) => "consensus",
        Command::IrtValidate(_) => "irt-validate",
        Command::Synopses(_) => "synopses",
        Command::Misconceptions(_) => "misconceptions",
        Command::Report(_) => "report",
        Command::Cost(_) => "cost",
        Command::Synth(_) => "synth",
    }
}

fn summary_dir(command: &Command) -> Option<PathBuf> {
    match command {
        Command::Ingest(a) => Some(a.run.run_dir.clone()),
        Command::Difficulty(a) => Some(a.run.run_dir.clone()),
        Command::Consensus(a) => Some(a.run.run_dir.clone()),
        Command::IrtValidate(a) => Some(a.run.run_dir.clone()),
        Command::Synopses(a) | Command::Misconceptions(a) => Some(a.run.run_dir.clone()),
        Command::Report(a) => Some(a.run.run_dir.clone()),
        Command::Cost(a) => a.run_dir.clone(),
        Command::Synth(a) => Some(a.out.clone()),
    }
}

fn dispatch(command: &Command) -> anyhow::Result<stages::Outcome> {
    match command {
        Command::Ingest(a) => stages::ingest(&RunDir::open(&a.run.run_dir)?, a),
        Command::Difficulty(a) => stages::difficulty(&RunDir::open(&a.run.run_dir)?, a),
        Command::Consensus(a) => stages::consensus(&RunDir::open(&a.run.run_dir)?, a),
        Command::IrtValidate(a) => stages::irt_validate(&RunDir::open(&a.run.run_dir)?, a),
        Command::Synopses(a) => stages::synopses(&RunDir::open(&a.run.run_dir)?, a),
        Command::Misconceptions(a) => stages::misconceptions(&RunDir::open(&a.run.run_dir)?, a),
        Command::Report(a) => stages::report(&RunDir::open(&a.run.run_dir)?, a),
        Command::Cost(a) => stages::cost(a),
        Command::Synth(a) => stages::synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = stage_name(&cli.command);
    let result = dispatch(&cli.command);
    let summary = match &result {
        Ok(o) => StageSummary {
            stage: stage.to_string(),
            status: if o.exit_code == 0 { "ok" } else { "partial" }.to_string(),
            exit_code: o.exit_code,
            message: None,
            outputs: o.outputs.clone(),
            warnings: o.warnings.clone(),
            details: o.details.clone(),
        },
        Err(e) => StageSummary {
            stage: stage.to_string(),
            status: "error".to_string(),
            exit_code: exit_code(e),
            message: Some(format!("{e:#}")),
            outputs: vec![],
            warnings: vec![],
            details: serde_json::Value::Null,
        },
    };
    if let Ok(o) = &result {
        for w in &o.warnings {
            eprintln!("warning: {w}");
        }
    }
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    if let Some(dir) = summary_dir(&cli.command) {
        if dir.is_dir() {
            if let Err(e) = (RunDir { root: dir }).write_summary(&summary) {
                eprintln!("error: {e:#}");
            }
        }
    }
    ExitCode::from(summary.exit_code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_documented() {
        let cmd = Cli::command();
        for sub in cmd.get_subcommands() {
            assert!(sub.get_about().is_some(), "{}", sub.get_name());
            for arg in sub.get_arguments() {
                if arg.get_id() == "help" {
                    continue;
                }
                assert!(
                    arg.get_help().is_some(),
                    "{} --{}",
                    sub.get_name(),
                    arg.get_id()
                );
            }
        }
    }
}
