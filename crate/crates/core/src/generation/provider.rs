use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::mock::EchoProvider;
use super::{ChatRequest, Speaker};
use crate::error::{CoachError, Result};
use crate::par::InFlightLimit;

/// Vendor request/response shape spoken by a provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WireFormat {
    /// `{model, messages}` -> `choices[0].message.content`
    #[default]
    OpenaiChat,
    /// `{model, system, messages, max_tokens}` -> `content[0].text`
    Anthropic,
    /// `{model, messages}` -> `{"text": ...}`
    PlainText,
    /// In-process echo provider; no network.
    MockEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_id: String,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model_name: String,
    /// Name of the environment variable holding the API key. Never the key itself.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub wire: WireFormat,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    1000
}
fn default_in_flight() -> usize {
    4
}

impl ProviderConfig {
    pub fn mock(provider_id: impl Into<String>) -> Self {
        ProviderConfig {
            provider_id: provider_id.into(),
            endpoint: String::new(),
            model_name: "mock-echo".into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff(),
            wire: WireFormat::MockEcho,
            max_in_flight: default_in_flight(),
            max_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.provider_id.trim().is_empty() {
            return Err(CoachError::Config("provider_id is empty".into()));
        }
        if self.timeout_secs == 0 {
            return Err(CoachError::Config(format!(
                "{}: timeout must be positive",
                self.provider_id
            )));
        }
        if self.wire != WireFormat::MockEcho {
            let ok = reqwest::Url::parse(&self.endpoint)
                .map(|u| matches!(u.scheme(), "http" | "https"))
                .unwrap_or(false);
            if !ok {
                return Err(CoachError::Config(format!(
                    "{}: endpoint {:?} is not a valid http(s) URL",
                    self.provider_id, self.endpoint
                )));
            }
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff_base: Duration::from_millis(self.backoff_base_ms),
        }
    }
}

/// Reads a JSON array of provider configs.
pub fn load_provider_configs(path: impl AsRef<Path>) -> Result<Vec<ProviderConfig>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| CoachError::io(path, e))?;
    let configs: Vec<ProviderConfig> =
        serde_json::from_str(&raw).map_err(|e| CoachError::parse(path.display().to_string(), e))?;
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub token_usage: Option<TokenUsage>,
    /// Retries spent before the successful attempt.
    pub retries: u32,
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider configuration error: {0}")]
    Config(String),
    #[error("provider {provider} timed out after {attempts} attempts")]
    Timeout { provider: String, attempts: u32 },
    #[error("transport error from {provider} after {attempts} attempts: {message}")]
    Transport {
        provider: String,
        attempts: u32,
        message: String,
    },
    #[error("provider {provider} rejected the request with HTTP {status}: {body}")]
    Rejected {
        provider: String,
        status: u16,
        body: String,
    },
    #[error("malformed response from {provider}: {message}")]
    Malformed { provider: String, message: String },
}

impl ProviderError {
    /// True for errors that exhausted retries on a transient failure.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            ProviderError::Timeout { .. } | ProviderError::Transport { .. }
        )
    }
}

/// Outcome of a single attempt, classified for the retry loop.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    Timeout,
    Transport(String),
    Status { code: u16, body: String },
    Malformed(String),
}

impl AttemptError {
    fn retryable(&self) -> bool {
        match self {
            AttemptError::Timeout | AttemptError::Transport(_) => true,
            AttemptError::Status { code, .. } => *code >= 500,
            AttemptError::Malformed(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_base: Duration,
}

impl RetryPolicy {
    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        self.backoff_base
            .saturating_mul(2u32.saturating_pow(retry.saturating_sub(1)))
    }
}

/// Runs `attempt` until it succeeds, fails permanently, or retries run out.
/// Returns the value and the number of retries used.
pub fn with_retries<T>(
    provider: &str,
    policy: &RetryPolicy,
    mut attempt: impl FnMut(u32) -> std::result::Result<T, AttemptError>,
) -> std::result::Result<(T, u32), ProviderError> {
    let mut retries = 0;
    loop {
        match attempt(retries) {
            Ok(v) => return Ok((v, retries)),
            Err(e) if e.retryable() && retries < policy.max_retries => {
                retries += 1;
                let delay = policy.delay_before_retry(retries);
                log::warn!(
                    "{provider}: attempt {retries} failed ({e:?}); retry {retries} in {delay:?}"
                );
                std::thread::sleep(delay);
            }
            Err(e) => {
                let attempts = retries + 1;
                let provider = provider.to_string();
                return Err(match e {
                    AttemptError::Timeout => ProviderError::Timeout { provider, attempts },
                    AttemptError::Transport(message) => ProviderError::Transport {
                        provider,
                        attempts,
                        message,
                    },
                    AttemptError::Status { code, body } if code >= 500 => {
                        ProviderError::Transport {
                            provider,
                            attempts,
                            message: format!("HTTP {code}: {body}"),
                        }
                    }
                    AttemptError::Status { code, body } => ProviderError::Rejected {
                        provider,
                        status: code,
                        body,
                    },
                    AttemptError::Malformed(message) => {
                        ProviderError::Malformed { provider, message }
                    }
                });
            }
        }
    }
}

/// A chat-completion backend.
pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, ProviderError>;
}

#[derive(Debug, Default)]
pub struct ProviderMetrics {
    pub requests: AtomicU64,
    pub retries: AtomicU64,
    pub failures: AtomicU64,
}

impl ProviderMetrics {
    pub fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.requests.load(Ordering::Relaxed),
            self.retries.load(Ordering::Relaxed),
            self.failures.load(Ordering::Relaxed),
        )
    }
}

/// HTTP client for OpenAI-style, Anthropic-style and plain-text chat endpoints.
pub struct HttpChatProvider {
    config: ProviderConfig,
    limit: InFlightLimit,
    client: OnceLock<reqwest::blocking::Client>,
    pub metrics: ProviderMetrics,
}

const BODY_EXCERPT: usize = 300;

impl HttpChatProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        Ok(HttpChatProvider {
            limit: InFlightLimit::new(config.max_in_flight),
            config,
            client: OnceLock::new(),
            metrics: ProviderMetrics::default(),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn credential(&self) -> std::result::Result<Option<String>, ProviderError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Ok(Some(v)),
                _ => Err(ProviderError::Config(format!(
                    "{}: environment variable {var} is not set",
                    self.config.provider_id
                ))),
            },
        }
    }

    fn client(&self) -> std::result::Result<&reqwest::blocking::Client, ProviderError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let built = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(format!("http client: {e}")))?;
        Ok(self.client.get_or_init(|| built))
    }

    fn request_body(&self, req: &ChatRequest) -> Value {
        let model = &self.config.model_name;
        match self.config.wire {
            WireFormat::Anthropic => {
                // system-speaker insertions (summaries) are folded into the system field
                let mut system = req.system_prompt.clone();
                let mut messages = Vec::new();
                for m in &req.messages {
                    if m.speaker == Speaker::System {
                        system.push_str("\n\n");
                        system.push_str(&m.text);
                    } else {
                        messages.push(json!({"role": m.speaker.as_str(), "content": m.text}));
                    }
                }
                json!({
                    "model": model,
                    "system": system,
                    "messages": messages,
                    "max_tokens": self.config.max_tokens.unwrap_or(1024),
                })
            }
            _ => {
                let mut messages = vec![json!({"role": "system", "content": req.system_prompt})];
                messages.extend(
                    req.messages
                        .iter()
                        .map(|m| json!({"role": m.speaker.as_str(), "content": m.text})),
                );
                let mut body = json!({"model": model, "messages": messages});
                if let Some(max) = self.config.max_tokens {
                    body["max_tokens"] = json!(max);
                }
                body
            }
        }
    }

    fn parse_response(
        &self,
        v: &Value,
    ) -> std::result::Result<(String, Option<TokenUsage>), AttemptError> {
        let (text, usage) = match self.config.wire {
            WireFormat::Anthropic => (
                v.pointer("/content/0/text"),
                v.get("usage")
                    .map(|u| (u.get("input_tokens"), u.get("output_tokens"))),
            ),
            WireFormat::PlainText => (v.get("text"), None),
            _ => (
                v.pointer("/choices/0/message/content"),
                v.get("usage")
                    .map(|u| (u.get("prompt_tokens"), u.get("completion_tokens"))),
            ),
        };
        let text = text
            .and_then(Value::as_str)
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| AttemptError::Malformed("response has no completion text".into()))?;
        let usage = usage.and_then(|(p, c)| {
            Some(TokenUsage {
                prompt_tokens: p?.as_u64()?,
                completion_tokens: c?.as_u64()?,
            })
        });
        Ok((text.to_string(), usage))
    }

    fn send_once(
        &self,
        body: &Value,
        key: Option<&str>,
    ) -> std::result::Result<(String, Option<TokenUsage>), AttemptError> {
        let client = self
            .client()
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        let mut rb = client.post(&self.config.endpoint).json(body);
        if let Some(key) = key {
            rb = match self.config.wire {
                WireFormat::Anthropic => rb
                    .header("x-api-key", key)
                    .header("anthropic-version", "2023-06-01"),
                _ => rb.bearer_auth(key),
            };
        }
        let _slot = self.limit.acquire();
        let resp = rb.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                // reqwest errors carry the URL only, never headers
                AttemptError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(AttemptError::Status {
                code: status.as_u16(),
                body: redact(&excerpt(&text), key),
            });
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| AttemptError::Malformed(e.to_string()))?;
        self.parse_response(&v)
    }
}

fn excerpt(s: &str) -> String {
    let mut out: String = s.chars().take(BODY_EXCERPT).collect();
    if s.chars().count() > BODY_EXCERPT {
        out.push('…');
    }
    out
}

fn redact(s: &str, secret: Option<&str>) -> String {
    match secret {
        Some(k) if !k.is_empty() => s.replace(k, "[redacted]"),
        _ => s.to_string(),
    }
}

impl ChatProvider for HttpChatProvider {
    fn id(&self) -> &str {
        &self.config.provider_id
    }

    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, ProviderError> {
        // credential problems surface before any network call
        let key = self.credential()?;
        let mut req = request.clone();
        req.model_name = self.config.model_name.clone();
        req.provider_id = self.config.provider_id.clone();
        let body = self.request_body(&req);

        self.metrics.requests.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let result = with_retries(
            &self.config.provider_id,
            &self.config.retry_policy(),
            |_| self.send_once(&body, key.as_deref()),
        );
        match result {
            Ok(((text, token_usage), retries)) => {
                self.metrics
                    .retries
                    .fetch_add(u64::from(retries), Ordering::Relaxed);
                Ok(ChatResponse {
                    text,
                    latency: started.elapsed(),
                    token_usage,
                    retries,
                })
            }
            Err(e) => {
                self.metrics.failures.fetch_add(1, Ordering::Relaxed);
                Err(e)
            }
        }
    }
}

/// Providers keyed by id, with one default.
#[derive(Clone)]
pub struct ProviderRegistry {
    providers: BTreeMap<String, Arc<dyn ChatProvider>>,
    default_id: String,
}

impl ProviderRegistry {
    pub fn new(default: Arc<dyn ChatProvider>) -> Self {
        let default_id = default.id().to_string();
        let mut providers = BTreeMap::new();
        providers.insert(default_id.clone(), default);
        ProviderRegistry {
            providers,
            default_id,
        }
    }

    /// Builds providers from configs; the first config is the default.
    pub fn from_configs(configs: &[ProviderConfig]) -> Result<Self> {
        let mut iter = configs.iter();
        let first = iter
            .next()
            .ok_or_else(|| CoachError::Config("no providers configured".into()))?;
        let mut reg = ProviderRegistry::new(build_provider(first)?);
        for c in iter {
            reg.insert(build_provider(c)?)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, provider: Arc<dyn ChatProvider>) -> Result<()> {
        let id = provider.id().to_string();
        if self.providers.insert(id.clone(), provider).is_some() {
            return Err(CoachError::DuplicateId(id));
        }
        Ok(())
    }

    pub fn get(&self, id: Option<&str>) -> Option<&Arc<dyn ChatProvider>> {
        self.providers.get(id.unwrap_or(&self.default_id))
    }

    pub fn default_id(&self) -> &str {
        &self.default_id
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.providers.keys().map(String::as_str)
    }
}

pub fn build_provider(config: &ProviderConfig) -> Result<Arc<dyn ChatProvider>> {
    config.validate()?;
    Ok(match config.wire {
        WireFormat::MockEcho => Arc::new(EchoProvider::new(&config.provider_id)),
        _ => Arc::new(HttpChatProvider::new(config.clone())?),
    })
}
