//! Prompt assembly, provider calls with structured output, and usage accounting.

pub mod cost;
pub mod prompts;
pub mod provider;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{
    compute_cost, default_pricing, load_pricing, CostReport, CostTotals, Pricing, PricingTable,
    UsageEntry, UsageLedger,
};
pub use prompts::{
    build_misconception_prompt, build_synopsis_prompt, ModelParams, PromptBundle, Provenance,
    SchemaId,
};
pub use provider::{
    Completion, CompletionRequest, FixtureError, FixtureFile, FixtureResponse, HttpConfig,
    HttpProvider, MockProvider, Provider, ProviderError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("at least one transcript is required")]
    EmptyTranscripts,
    #[error("question {0} is drag and drop and is excluded from misconception analysis")]
    ExcludedType(String),
    #[error("authentication error: {0}")]
    Auth(String),
    #[error("rate limited after {retries} retries: {message}")]
    RateLimited { retries: u32, message: String },
    #[error("output for {key} failed {schema} validation after a re-request: {detail}")]
    SchemaViolation {
        key: String,
        schema: String,
        detail: String,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("prompt for {key} is about {estimated} tokens, over the provider limit of {limit}")]
    ContextTooLarge {
        key: String,
        estimated: u64,
        limit: u64,
    },
    #[error("no <synopsis>...</synopsis> block with at least one bullet")]
    MissingSynopsisTags,
    #[error("no pricing row for model {0}")]
    UnknownModelPricing(String),
    #[error("no mock fixture for key {0}")]
    MissingFixture(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl LlmError {
    pub fn from_provider(err: ProviderError, retries: u32) -> Self {
        match err {
            ProviderError::Auth(m) => LlmError::Auth(m),
            ProviderError::RateLimited(message) => LlmError::RateLimited { retries, message },
            ProviderError::Transport(m) => LlmError::Transport(m),
            ProviderError::Rejected { status, body } => {
                LlmError::Transport(format!("status {status}: {body}"))
            }
            ProviderError::MissingFixture(k) => LlmError::MissingFixture(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisconceptionResult {
    pub reasoning: String,
    pub misconceptions: Vec<String>,
}

/// Accepts only a JSON object with exactly `reasoning` (string) and a nonempty
/// `misconceptions` list of strings.
pub fn parse_misconception(text: &str) -> Result<MisconceptionResult, String> {
    let r: MisconceptionResult = serde_json::from_str(text.trim()).map_err(|e| e.to_string())?;
    if r.misconceptions.is_empty() {
        return Err("misconceptions list is empty".into());
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynopsisBullet {
    pub concept_name: String,
    pub description: String,
    /// The bullet had no " - " separator; the whole text is in `concept_name`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing_separator: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynopsisResult {
    pub bullets: Vec<SynopsisBullet>,
    pub raw: String,
}

fn parse_bullet(line: &str) -> Option<SynopsisBullet> {
    let body = line
        .strip_prefix("- ")
        .or_else(|| line.strip_prefix("* "))
        .or_else(|| line.strip_prefix("\u{2022} "))?
        .trim()
        .trim_matches('`')
        .trim();
    if body.is_empty() {
        return None;
    }
    Some(match body.split_once(" - ") {
        Some((name, desc)) => SynopsisBullet {
            concept_name: name.trim().to_string(),
            description: desc.trim().to_string(),
            missing_separator: false,
        },
        None => SynopsisBullet {
            concept_name: body.to_string(),
            description: String::new(),
            missing_separator: true,
        },
    })
}

/// Bullets from the first `<synopsis>` block that closes and holds at least one bullet.
pub fn extract_synopsis(raw: &str) -> Result<SynopsisResult, LlmError> {
    const OPEN: &str = "<synopsis>";
    const CLOSE: &str = "</synopsis>";
    let mut from = 0;
    while let Some(start) = raw[from..].find(OPEN).map(|i| from + i + OPEN.len()) {
        let Some(len) = raw[start..].find(CLOSE) else {
            break;
        };
        let bullets: Vec<SynopsisBullet> = raw[start..start + len]
            .lines()
            .filter_map(|l| parse_bullet(l.trim()))
            .collect();
        if !bullets.is_empty() {
            return Ok(SynopsisResult {
                bullets,
                raw: raw.to_string(),
            });
        }
        from = start;
    }
    Err(LlmError::MissingSynopsisTags)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "schema", rename_all = "snake_case")]
pub enum StructuredOutput {
    Synopsis(SynopsisResult),
    Misconception(MisconceptionResult),
}

pub fn validate_output(schema: SchemaId, text: &str) -> Result<StructuredOutput, String> {
    match schema {
        SchemaId::Misconception => parse_misconception(text).map(StructuredOutput::Misconception),
        SchemaId::Synopsis => extract_synopsis(text)
            .map(StructuredOutput::Synopsis)
            .map_err(|e| e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles after each.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn no_wait() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            ..RetryPolicy::default()
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

/// Crude size guard: roughly four bytes per token.
pub fn estimate_tokens(bundle: &PromptBundle) -> u64 {
    (bundle.system_message.len() + bundle.user_message.len()).div_ceil(4) as u64
}

fn call_with_retry(
    provider: &dyn Provider,
    request: &CompletionRequest<'_>,
    policy: &RetryPolicy,
) -> Result<Completion, LlmError> {
    let mut retries = 0;
    loop {
        match provider.complete(request) {
            Ok(c) => return Ok(c),
            Err(e) if e.is_transient() && retries < policy.max_retries => {
                std::thread::sleep(policy.delay(retries));
                retries += 1;
            }
            Err(e) => return Err(LlmError::from_provider(e, retries)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completed {
    pub output: StructuredOutput,
    /// Covers both calls when a re-request was needed.
    pub usage: UsageEntry,
    pub re_requested: bool,
}

/// Calls the provider, validates the output against the bundle's schema, and
/// re-requests once on a violation. Transient errors are retried per `policy`.
pub fn complete_structured(
    provider: &dyn Provider,
    bundle: &PromptBundle,
    policy: &RetryPolicy,
) -> Result<Completed, LlmError> {
    let key = bundle.key();
    if let Some(limit) = provider.context_limit() {
        let estimated = estimate_tokens(bundle);
        if estimated > limit {
            return Err(LlmError::ContextTooLarge {
                key,
                estimated,
                limit,
            });
        }
    }
    let request = CompletionRequest {
        key: &key,
        system: &bundle.system_message,
        user: &bundle.user_message,
        params: &bundle.model_params,
    };
    let schema = bundle.model_params.schema_id;
    let mut input_tokens = 0;
    let mut output_tokens = 0;
    let mut last_detail = String::new();
    for attempt in 0..2 {
        let c = call_with_retry(provider, &request, policy)?;
        input_tokens += c.input_tokens;
        output_tokens += c.output_tokens;
        match validate_output(schema, &c.text) {
            Ok(output) => {
                return Ok(Completed {
                    output,
                    usage: UsageEntry {
                        provenance: bundle.provenance.clone(),
                        model_name: bundle.model_params.model_name.clone(),
                        input_tokens,
                        output_tokens,
                    },
                    re_requested: attempt > 0,
                })
            }
            Err(detail) => last_detail = detail,
        }
    }
    Err(LlmError::SchemaViolation {
        key,
        schema: schema.as_str().to_string(),
        detail: last_detail,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub key: String,
    pub provenance: Provenance,
    pub result: Result<Completed, LlmError>,
}

/// Runs bundles with at most `parallelism` calls in flight. Results come back sorted
/// by provenance key regardless of completion order.
pub fn run_batch(
    provider: &dyn Provider,
    bundles: &[PromptBundle],
    policy: &RetryPolicy,
    parallelism: usize,
) -> Vec<BatchItem> {
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<BatchItem>> = Mutex::new(Vec::with_capacity(bundles.len()));
    let workers = parallelism.max(1).min(bundles.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(bundle) = bundles.get(i) else { break };
                let result = complete_structured(provider, bundle, policy);
                done.lock().expect("batch results").push(BatchItem {
                    key: bundle.key(),
                    provenance: bundle.provenance.clone(),
                    result,
                });
            });
        }
    });
    let mut items = done.into_inner().expect("batch results");
    items.sort_by(|a, b| {
        a.key
            .cmp(&b.key)
            .then_with(|| a.provenance.cmp(&b.provenance))
    });
    items
}

/// Appends successful calls to `ledger` in batch (key) order.
pub fn record_usage(ledger: &mut UsageLedger, items: &[BatchItem]) {
    for item in items {
        if let Ok(c) = &item.result {
            ledger.append(c.usage.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::collections::BTreeMap;

    fn immunotherapy_output() -> serde_json::Value {
        json!({
            "reasoning": "Students confuse the two mechanisms.",
            "misconceptions": [
                "Students may believe that tumor vaccination with neoantigens involves the administration of antibodies, confusing it with checkpoint blockade.",
                "Students might not understand that checkpoint blockade specifically involves antibodies that block inhibitory receptors, leading to T cell activation.",
                "There may be confusion between the direct stimulation of T cells by neoantigens and the indirect activation of T cells by removing inhibitory signals through antibodies."
            ]
        })
    }

    fn bundle(qid: &str) -> PromptBundle {
        PromptBundle {
            system_message: "s".into(),
            user_message: "u".into(),
            model_params: ModelParams::misconception(),
            provenance: Provenance {
                question_id: Some(qid.into()),
                ..Provenance::default()
            },
        }
    }

    fn mock(entries: Vec<(&str, Vec<FixtureResponse>)>) -> MockProvider {
        MockProvider::scripted(
            entries
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    #[test]
    fn structured_output_from_mock() {
        let m = mock(vec![(
            "q",
            vec![FixtureResponse::output(immunotherapy_output(), 1749, 380)],
        )]);
        let c = complete_structured(&m, &bundle("q"), &RetryPolicy::no_wait()).unwrap();
        let StructuredOutput::Misconception(r) = c.output else {
            panic!()
        };
        assert_eq!(r.misconceptions.len(), 3);
        assert!(r.misconceptions.contains(&"There may be confusion between the direct stimulation of T cells by neoantigens and the indirect activation of T cells by removing inhibitory signals through antibodies.".to_string()));
        assert_eq!((c.usage.input_tokens, c.usage.output_tokens), (1749, 380));
        assert!(!c.re_requested);
    }

    #[test]
    fn one_re_request_sums_tokens() {
        let m = mock(vec![(
            "q",
            vec![
                FixtureResponse::text("not json", 100, 10),
                FixtureResponse::output(immunotherapy_output(), 120, 30),
            ],
        )]);
        let c = complete_structured(&m, &bundle("q"), &RetryPolicy::no_wait()).unwrap();
        assert!(c.re_requested);
        assert_eq!(m.calls("q"), 2);
        assert_eq!((c.usage.input_tokens, c.usage.output_tokens), (220, 40));
    }

    #[test]
    fn persistent_bad_output_is_schema_violation() {
        let m = mock(vec![(
            "q",
            vec![FixtureResponse::output(
                json!({"reasoning": "r", "misconceptions": []}),
                1,
                1,
            )],
        )]);
        let err = complete_structured(&m, &bundle("q"), &RetryPolicy::no_wait()).unwrap_err();
        assert!(matches!(err, LlmError::SchemaViolation { .. }));
        assert_eq!(m.calls("q"), 2);
    }

    #[test]
    fn transient_errors_retry_three_times() {
        let rl = FixtureResponse::failure(FixtureError::RateLimited);
        let m = mock(vec![(
            "q",
            vec![
                rl.clone(),
                rl.clone(),
                rl.clone(),
                FixtureResponse::output(immunotherapy_output(), 1, 1),
            ],
        )]);
        assert!(complete_structured(&m, &bundle("q"), &RetryPolicy::no_wait()).is_ok());
        assert_eq!(m.calls("q"), 4);
        let m = mock(vec![("q", vec![rl])]);
        let err = complete_structured(&m, &bundle("q"), &RetryPolicy::no_wait()).unwrap_err();
        assert!(matches!(err, LlmError::RateLimited { retries: 3, .. }));
        assert_eq!(m.calls("q"), 4);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let m = mock(vec![(
            "q",
            vec![FixtureResponse::failure(FixtureError::Auth)],
        )]);
        assert!(matches!(
            complete_structured(&m, &bundle("q"), &RetryPolicy::no_wait()),
            Err(LlmError::Auth(_))
        ));
        assert_eq!(m.calls("q"), 1);
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        let d: Vec<u64> = (0..3).map(|i| p.delay(i).as_secs()).collect();
        assert_eq!(d, vec![1, 2, 4]);
    }

    #[test]
    fn context_limit_guard() {
        let m = MockProvider::default().with_context_limit(1);
        let mut b = bundle("q");
        b.user_message = "x".repeat(100);
        assert!(matches!(
            complete_structured(&m, &b, &RetryPolicy::no_wait()),
            Err(LlmError::ContextTooLarge { limit: 1, .. })
        ));
    }

    #[test]
    fn misconception_schema_is_strict() {
        assert!(parse_misconception(r#"{"reasoning": "r", "misconceptions": ["m"]}"#).is_ok());
        assert!(
            parse_misconception(r#"{"reasoning": "r", "misconceptions": ["m"], "x": 1}"#).is_err()
        );
        assert!(parse_misconception(r#"{"misconceptions": ["m"]}"#).is_err());
        assert!(parse_misconception(r#"{"reasoning": 3, "misconceptions": ["m"]}"#).is_err());
    }

    #[test]
    fn synopsis_single_bullet() {
        let s = extract_synopsis(
            "<synopsis>\n- Costimulation - Teaches the two-signal model.\n</synopsis>",
        )
        .unwrap();
        assert_eq!(
            s.bullets,
            vec![SynopsisBullet {
                concept_name: "Costimulation".into(),
                description: "Teaches the two-signal model.".into(),
                missing_separator: false
            }]
        );
    }

    #[test]
    fn synopsis_ignores_chatter_and_flags_missing_separator() {
        let raw = "Sure! Here it is.\n<synopsis>\n\n- A - a.\n- Lonely bullet\n- B-cells - b - with dash.\n\n</synopsis>\nBye";
        let s = extract_synopsis(raw).unwrap();
        assert_eq!(s.bullets.len(), 3);
        assert!(s.bullets[1].missing_separator);
        assert_eq!(s.bullets[2].concept_name, "B-cells");
        assert_eq!(s.bullets[2].description, "b - with dash.");
        assert_eq!(s.raw, raw);
    }

    #[test]
    fn synopsis_requires_tags() {
        assert_eq!(
            extract_synopsis("- A - a."),
            Err(LlmError::MissingSynopsisTags)
        );
        assert_eq!(
            extract_synopsis("<synopsis>\n- A - a."),
            Err(LlmError::MissingSynopsisTags)
        );
        assert_eq!(
            extract_synopsis("<synopsis></synopsis>"),
            Err(LlmError::MissingSynopsisTags)
        );
    }

    #[test]
    fn synopsis_skips_empty_block_before_real_one() {
        let s = extract_synopsis(
            "inside <synopsis> tags</synopsis>\n<synopsis>\n- X - y.\n</synopsis>",
        )
        .unwrap();
        assert_eq!(s.bullets[0].concept_name, "X");
    }

    #[test]
    fn batch_is_ordered_by_key() {
        let entries: Vec<(String, Vec<FixtureResponse>)> = (0..20)
            .map(|i| {
                (
                    format!("q{i:02}"),
                    vec![FixtureResponse::output(immunotherapy_output(), i, 1)],
                )
            })
            .collect();
        let m = MockProvider::scripted(entries.into_iter().collect());
        let bundles: Vec<PromptBundle> =
            (0..20).rev().map(|i| bundle(&format!("q{i:02}"))).collect();
        let items = run_batch(&m, &bundles, &RetryPolicy::no_wait(), 4);
        let keys: Vec<&str> = items.iter().map(|i| i.key.as_str()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let mut ledger = UsageLedger::default();
        record_usage(&mut ledger, &items);
        let tokens: Vec<u64> = ledger.entries.iter().map(|e| e.input_tokens).collect();
        assert_eq!(tokens, (0..20).collect::<Vec<_>>());
    }
}
