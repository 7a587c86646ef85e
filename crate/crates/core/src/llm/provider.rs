use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompts::{ModelParams, SchemaId};

pub const DEFAULT_API_KEY_ENV: &str = "LLM_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub key: &'a str,
    pub system: &'a str,
    pub user: &'a str,
    pub params: &'a ModelParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("no mock fixture for key {0}")]
    MissingFixture(String),
}

impl ProviderError {
    /// Worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited(_) | ProviderError::Transport(_)
        )
    }
}

/// A synchronous chat-completion backend.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError>;

    /// Input budget in tokens, if the backend has one.
    fn context_limit(&self) -> Option<u64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureError {
    RateLimited,
    Transport,
    Auth,
}

/// One scripted reply. `output` is serialized compactly; `text` is used verbatim.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Value>,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<FixtureError>,
}

impl FixtureResponse {
    pub fn output(output: Value, input_tokens: u64, output_tokens: u64) -> Self {
        FixtureResponse {
            output: Some(output),
            input_tokens,
            output_tokens,
            ..FixtureResponse::default()
        }
    }

    pub fn text(text: impl Into<String>, input_tokens: u64, output_tokens: u64) -> Self {
        FixtureResponse {
            text: Some(text.into()),
            input_tokens,
            output_tokens,
            ..FixtureResponse::default()
        }
    }

    pub fn failure(error: FixtureError) -> Self {
        FixtureResponse {
            error: Some(error),
            ..FixtureResponse::default()
        }
    }

    fn reply(&self, key: &str) -> Result<Completion, ProviderError> {
        match self.error {
            Some(FixtureError::RateLimited) => {
                return Err(ProviderError::RateLimited(format!("mock {key}")))
            }
            Some(FixtureError::Transport) => {
                return Err(ProviderError::Transport(format!("mock {key}")))
            }
            Some(FixtureError::Auth) => return Err(ProviderError::Auth(format!("mock {key}"))),
            None => {}
        }
        let text = match (&self.text, &self.output) {
            (Some(t), _) => t.clone(),
            (None, Some(v)) => serde_json::to_string(v).expect("json value serializes"),
            (None, None) => String::new(),
        };
        Ok(Completion {
            text,
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
        })
    }
}

/// On-disk fixture: one response, or a sequence replayed call by call
/// (the last one repeats once the sequence is exhausted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureFile {
    Sequence { responses: Vec<FixtureResponse> },
    Single(FixtureResponse),
}

impl FixtureFile {
    fn into_responses(self) -> Vec<FixtureResponse> {
        match self {
            FixtureFile::Sequence { responses } => responses,
            FixtureFile::Single(r) => vec![r],
        }
    }
}

pub fn default_fixture_name(schema: SchemaId) -> String {
    format!("_default.{}.json", schema.as_str())
}

/// Serves fixtures keyed by provenance key. Lookups try `<dir>/<key>.json`, then
/// `<dir>/_default.<schema>.json`.
#[derive(Debug, Default)]
pub struct MockProvider {
    dir: Option<PathBuf>,
    scripted: BTreeMap<String, Vec<FixtureResponse>>,
    calls: Mutex<BTreeMap<String, usize>>,
    context_limit: Option<u64>,
}

impl MockProvider {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        MockProvider {
            dir: Some(dir.into()),
            ..MockProvider::default()
        }
    }

    pub fn scripted(scripted: BTreeMap<String, Vec<FixtureResponse>>) -> Self {
        MockProvider {
            scripted,
            ..MockProvider::default()
        }
    }

    pub fn with_context_limit(mut self, tokens: u64) -> Self {
        self.context_limit = Some(tokens);
        self
    }

    /// Calls seen so far for `key`.
    pub fn calls(&self, key: &str) -> usize {
        self.calls
            .lock()
            .expect("mock call counter")
            .get(key)
            .copied()
            .unwrap_or(0)
    }

    fn responses(
        &self,
        key: &str,
        schema: SchemaId,
    ) -> Result<Vec<FixtureResponse>, ProviderError> {
        if let Some(r) = self.scripted.get(key) {
            return Ok(r.clone());
        }
        let Some(dir) = &self.dir else {
            return Err(ProviderError::MissingFixture(key.to_string()));
        };
        for name in [format!("{key}.json"), default_fixture_name(schema)] {
            let path = dir.join(&name);
            if path.is_file() {
                return read_fixture(&path).map(FixtureFile::into_responses);
            }
        }
        Err(ProviderError::MissingFixture(key.to_string()))
    }
}

fn read_fixture(path: &Path) -> Result<FixtureFile, ProviderError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ProviderError::Transport(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ProviderError::Rejected {
        status: 0,
        body: format!("{}: {e}", path.display()),
    })
}

impl Provider for MockProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError> {
        let responses = self.responses(request.key, request.params.schema_id)?;
        let n = {
            let mut calls = self.calls.lock().expect("mock call counter");
            let n = calls.entry(request.key.to_string()).or_insert(0);
            *n += 1;
            *n - 1
        };
        match responses.get(n.min(responses.len().saturating_sub(1))) {
            Some(r) => r.reply(request.key),
            None => Err(ProviderError::MissingFixture(request.key.to_string())),
        }
    }

    fn context_limit(&self) -> Option<u64> {
        self.context_limit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer credential.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub context_limit_tokens: Option<u64>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: DEFAULT_ENDPOINT.to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 120,
            context_limit_tokens: Some(128_000),
        }
    }
}

/// Chat-completions over HTTPS.
pub struct HttpProvider {
    config: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl HttpProvider {
    /// Reads the credential up front; fails without touching the network when it is absent.
    pub fn from_env(config: HttpConfig) -> Result<Self, ProviderError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| {
                ProviderError::Auth(format!(
                    "environment variable {} is not set",
                    config.api_key_env
                ))
            })?;
        Ok(Self::with_key(config, api_key))
    }

    pub fn with_key(config: HttpConfig, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider {
            config,
            api_key,
            agent,
        }
    }
}

/// Request body: system message (omitted when empty), user message, temperature, and a
/// strict JSON schema for misconception calls.
pub fn request_body(request: &CompletionRequest<'_>) -> Value {
    let mut messages = Vec::new();
    if !request.system.is_empty() {
        messages.push(json!({"role": "system", "content": request.system}));
    }
    messages.push(json!({"role": "user", "content": request.user}));
    let mut body = json!({
        "model": request.params.model_name,
        "temperature": request.params.temperature,
        "messages": messages,
    });
    if request.params.schema_id == SchemaId::Misconception {
        body["response_format"] = json!({
            "type": "json_schema",
            "json_schema": {
                "name": "ProblemMisconceptions",
                "strict": true,
                "schema": {
                    "type": "object",
                    "properties": {
                        "reasoning": {"type": "string"},
                        "misconceptions": {"type": "array", "items": {"type": "string"}}
                    },
                    "required": ["reasoning", "misconceptions"],
                    "additionalProperties": false
                }
            }
        });
    }
    body
}

/// Pulls the message text and usage counts out of a chat-completions response.
pub fn parse_response_body(body: &Value) -> Result<Completion, ProviderError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| {
            ProviderError::Transport("response has no choices[0].message.content".into())
        })?;
    let usage = |name: &str| {
        body.pointer(&format!("/usage/{name}"))
            .and_then(Value::as_u64)
            .unwrap_or(0)
    };
    Ok(Completion {
        text: text.to_string(),
        input_tokens: usage("prompt_tokens"),
        output_tokens: usage("completion_tokens"),
    })
}

impl Provider for HttpProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, ProviderError> {
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(request))
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        match status {
            200..=299 => {
                let body: Value = serde_json::from_str(&text)
                    .map_err(|e| ProviderError::Transport(format!("bad response JSON: {e}")))?;
                parse_response_body(&body)
            }
            401 | 403 => Err(ProviderError::Auth(text)),
            429 => Err(ProviderError::RateLimited(text)),
            500..=599 => Err(ProviderError::Transport(format!("status {status}: {text}"))),
            _ => Err(ProviderError::Rejected { status, body: text }),
        }
    }

    fn context_limit(&self) -> Option<u64> {
        self.config.context_limit_tokens
    }
}
