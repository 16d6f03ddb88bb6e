use std::path::PathBuf;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BatchOutcome, Dimension, Provenance, RatingFailure, RatingRecord, RawScale, WordItem};
use crate::error::{Error, Result};
use crate::seed;

const BUNDLED_TEMPLATE: &str = include_str!("../../data/prompt_template.txt");

/// Wire format of the chat endpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// `/v1/chat/completions` bodies; also served by most local and hosted gateways.
    #[default]
    Openai,
    /// `/v1/messages` bodies.
    Anthropic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub api_style: ApiStyle,
    /// Environment variable holding the API key; no auth header when unset.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_retries: u32,
    pub requests_per_second: f64,
    pub burst: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_tokens: u32,
    pub prompt_template: Option<PathBuf>,
    /// Logs request and response bodies at debug level.
    pub debug: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: String::new(),
            model: String::new(),
            api_style: ApiStyle::Openai,
            api_key_env: None,
            temperature: 0.0,
            max_retries: 5,
            requests_per_second: 2.0,
            burst: 1,
            backoff_ms: 500,
            max_backoff_ms: 30_000,
            timeout_secs: 60,
            max_tokens: 16,
            prompt_template: None,
            debug: false,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature != 0.0 {
            return Err(Error::Config(format!(
                "LLM raters must run at temperature 0, got {}",
                self.temperature
            )));
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(Error::Config(
                "LLM rater needs both `endpoint` and `model`".into(),
            ));
        }
        if self.requests_per_second.is_nan() || self.requests_per_second <= 0.0 || self.burst == 0 {
            return Err(Error::Config("rate limit must be positive".into()));
        }
        Ok(())
    }

    fn api_key(&self) -> Result<Option<String>> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::Config(format!("environment variable {var} is not set"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn bundled() -> Self {
        PromptTemplate {
            text: BUNDLED_TEMPLATE.to_string(),
        }
    }

    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if !text.contains("{word}") {
            return Err(Error::Config("prompt template must contain {word}".into()));
        }
        Ok(PromptTemplate { text })
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        match path {
            None => Ok(Self::bundled()),
            Some(p) => Self::new(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, word: &str, dim: Dimension) -> String {
        let (low, high) = dim.poles();
        self.text
            .replace("{word}", word)
            .replace("{dimension}", dim.as_str())
            .replace("{pole_low}", low)
            .replace("{pole_high}", high)
    }
}

/// Classic token bucket: `burst` tokens, refilled at `rate` per second.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn new(rate: f64, burst: u32) -> Self {
        TokenBucket {
            rate,
            capacity: f64::from(burst),
            tokens: f64::from(burst),
            last: Instant::now(),
        }
    }

    /// Blocks until a token is available and takes it.
    pub fn acquire(&mut self) {
        loop {
            let now = Instant::now();
            let elapsed = now.duration_since(self.last).as_secs_f64();
            self.tokens = (self.tokens + elapsed * self.rate).min(self.capacity);
            self.last = now;
            if self.tokens >= 1.0 {
                self.tokens -= 1.0;
                return;
            }
            std::thread::sleep(Duration::from_secs_f64((1.0 - self.tokens) / self.rate));
        }
    }
}

/// Extracts the single number in a reply, if there is exactly one.
pub(crate) fn parse_answer(reply: &str) -> Option<f64> {
    let mut numbers = Vec::new();
    let mut current = String::new();
    for c in reply.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_digit() || (c == '.' && !current.is_empty() && !current.contains('.')) {
            current.push(c);
        } else if !current.is_empty() {
            numbers.push(current.trim_end_matches('.').to_string());
            current.clear();
        }
    }
    match numbers.as_slice() {
        [only] => only
            .parse::<f64>()
            .ok()
            .filter(|v| (0.0..=10.0).contains(v)),
        _ => None,
    }
}

enum Attempt {
    Reply(String),
    Retryable(String),
    Fatal(String),
}

struct Client {
    agent: ureq::Agent,
    config: LlmConfig,
    api_key: Option<String>,
    bucket: TokenBucket,
}

impl Client {
    fn new(config: &LlmConfig) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Client {
            agent,
            api_key: config.api_key()?,
            bucket: TokenBucket::new(config.requests_per_second, config.burst),
            config: config.clone(),
        })
    }

    fn body(&self, prompt: &str) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        })
    }

    fn send(&mut self, prompt: &str) -> Attempt {
        self.bucket.acquire();
        let body = self.body(prompt);
        if self.config.debug {
            log::debug!("request to {}: {body}", self.config.endpoint);
        }
        let mut req = self.agent.post(&self.config.endpoint);
        match (self.config.api_style, &self.api_key) {
            (ApiStyle::Openai, Some(key)) => {
                req = req.header("Authorization", &format!("Bearer {key}"))
            }
            (ApiStyle::Anthropic, Some(key)) => req = req.header("x-api-key", key),
            _ => {}
        }
        if self.config.api_style == ApiStyle::Anthropic {
            req = req.header("anthropic-version", "2023-06-01");
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retryable(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retryable(e.to_string()),
        };
        if self.config.debug {
            log::debug!("response {status}: {text}");
        }
        match status {
            200..=299 => {}
            429 | 500..=599 => return Attempt::Retryable(format!("HTTP {status}")),
            _ => return Attempt::Fatal(format!("HTTP {status}: {}", text.trim())),
        }
        let value: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Retryable(format!("response is not JSON: {e}")),
        };
        let content = match self.config.api_style {
            ApiStyle::Openai => value.pointer("/choices/0/message/content"),
            ApiStyle::Anthropic => value.pointer("/content/0/text"),
        };
        match content.and_then(Value::as_str) {
            Some(s) => Attempt::Reply(s.to_string()),
            None => Attempt::Retryable("response has no message content".into()),
        }
    }

    fn backoff(&self, attempt: u32) {
        let ms = self
            .config
            .backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.config.max_backoff_ms);
        std::thread::sleep(Duration::from_millis(ms));
    }

    /// Rates one item. Transport problems that survive all retries abort the batch;
    /// replies that never parse become a failure record.
    fn rate_one(&mut self, prompt: &str) -> Result<std::result::Result<f64, (u32, String)>> {
        let max_attempts = self.config.max_retries + 1;
        let mut last_reply = String::new();
        let mut transport_only = true;
        let mut last_transport = String::new();
        for attempt in 1..=max_attempts {
            match self.send(prompt) {
                Attempt::Reply(reply) => {
                    if let Some(v) = parse_answer(&reply) {
                        return Ok(Ok(v));
                    }
                    transport_only = false;
                    last_reply = reply;
                }
                Attempt::Retryable(msg) => {
                    log::warn!("attempt {attempt}/{max_attempts} failed: {msg}");
                    last_transport = msg;
                    if attempt < max_attempts {
                        self.backoff(attempt - 1);
                    }
                }
                Attempt::Fatal(msg) => {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message: msg,
                    })
                }
            }
        }
        if transport_only {
            return Err(Error::Transport {
                attempts: max_attempts,
                message: last_transport,
            });
        }
        Ok(Err((
            max_attempts,
            format!("unparseable reply `{}`", last_reply.trim()),
        )))
    }
}

fn unix_now() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

pub(super) fn rate(
    rater_id: &str,
    config: &LlmConfig,
    words: &[WordItem],
    dims: &[Dimension],
) -> Result<BatchOutcome> {
    let template = PromptTemplate::load(config.prompt_template.as_deref())?;
    let identity = json!({
        "endpoint": config.endpoint,
        "model": config.model,
        "api_style": config.api_style,
        "temperature": config.temperature,
        "template": template.text(),
    });
    let provenance = Provenance {
        hash: seed::short_hash(identity.to_string().as_bytes()),
        rater_id: rater_id.to_string(),
        kind: format!("llm:{}", config.model),
        timestamp: unix_now(),
    };
    let mut outcome = BatchOutcome {
        provenance,
        records: Vec::new(),
        failures: Vec::new(),
        requested: words.len() * dims.len(),
    };
    if dims.is_empty() {
        return Ok(outcome);
    }
    let mut client = Client::new(config)?;
    for item in words {
        for &dim in dims {
            let prompt = template.render(&item.word, dim);
            match client.rate_one(&prompt)? {
                Ok(raw) => outcome.records.push(RatingRecord {
                    rater_id: rater_id.to_string(),
                    pseudoword: item.word.clone(),
                    pair_id: item.pair_id.clone(),
                    dimension: dim,
                    score: RawScale::ZeroToTen.to_canonical(raw),
                    raw_scale: RawScale::ZeroToTen,
                    provenance: outcome.provenance.hash.clone(),
                }),
                Err((attempts, reason)) => {
                    log::warn!("{rater_id}: no rating for {} on {dim}: {reason}", item.word);
                    outcome.failures.push(RatingFailure {
                        pseudoword: item.word.clone(),
                        dimension: dim,
                        attempts,
                        reason,
                    });
                }
            }
        }
    }
    Ok(outcome)
}
