use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tracing::{debug, warn};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(with = "millis")]
    pub wall_time: Duration,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: ChatUsage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("endpoint unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("endpoint rejected request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
}

/// A chat-completion backend. Implementations must be callable concurrently.
pub trait ChatGateway: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError>;
}

/// `⌈chars / 4⌉`, the fallback token estimate.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Running totals of token usage, safe under concurrent increments.
#[derive(Debug, Default)]
pub struct UsageMeter {
    calls: AtomicU64,
    input: AtomicU64,
    output: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl UsageMeter {
    pub fn record(&self, usage: &ChatUsage) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.input.fetch_add(usage.input_tokens, Ordering::Relaxed);
        self.output.fetch_add(usage.output_tokens, Ordering::Relaxed);
    }

    pub fn totals(&self) -> UsageTotals {
        UsageTotals {
            calls: self.calls.load(Ordering::Relaxed),
            input_tokens: self.input.load(Ordering::Relaxed),
            output_tokens: self.output.load(Ordering::Relaxed),
        }
    }
}

/// Replays a fixed list of responses in order, wrapping around at the end.
#[derive(Debug)]
pub struct ScriptedGateway {
    script: Vec<String>,
    next: AtomicUsize,
}

impl ScriptedGateway {
    /// # Panics
    /// If `script` is empty.
    pub fn new(script: Vec<String>) -> Self {
        assert!(!script.is_empty(), "scripted gateway needs at least one response");
        Self {
            script,
            next: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.next.load(Ordering::SeqCst)
    }
}

impl ChatGateway for ScriptedGateway {
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst) % self.script.len();
        let text = self.script[i].clone();
        let usage = ChatUsage {
            input_tokens: estimate_tokens(prompt),
            output_tokens: estimate_tokens(&text),
            wall_time: Duration::ZERO,
        };
        Ok(Completion { text, usage })
    }
}

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: f64,
    /// Total attempts per request, including the first.
    pub max_retries: u32,
    pub temperature: f64,
    /// First backoff delay; doubles after each failed attempt.
    pub backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.deepseek.com/v1".into(),
            model: "deepseek-chat".into(),
            api_key_env: "DEEPSEEK_API_KEY".into(),
            timeout_s: 120.0,
            max_retries: 3,
            temperature: 1.0,
            backoff_ms: 500,
        }
    }
}

pub struct OpenAiGateway {
    config: EndpointConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for OpenAiGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiGateway")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(Completion),
    Retry(String),
    Fatal(GatewayError),
}

impl OpenAiGateway {
    /// Reads the key from `config.api_key_env`; a missing variable means no
    /// `Authorization` header is sent (useful for local endpoints).
    pub fn new(config: EndpointConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| GatewayError::Malformed(format!("http client: {e}")))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, prompt: &str) -> Attempt {
        let started = Instant::now();
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "stream": false,
        });
        let mut req = self.client.post(self.url()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Attempt::Fatal(GatewayError::Auth(format!("HTTP {status}: {text}")));
        }
        if status.is_server_error() || status.as_u16() == 429 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(GatewayError::Rejected {
                status: status.as_u16(),
                body: text,
            });
        }
        let v: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(GatewayError::Malformed(e.to_string())),
        };
        let Some(content) = v["choices"][0]["message"]["content"].as_str() else {
            return Attempt::Fatal(GatewayError::Malformed(
                "missing choices[0].message.content".into(),
            ));
        };
        let usage = &v["usage"];
        let usage = ChatUsage {
            input_tokens: usage["prompt_tokens"]
                .as_u64()
                .unwrap_or_else(|| estimate_tokens(prompt)),
            output_tokens: usage["completion_tokens"]
                .as_u64()
                .unwrap_or_else(|| estimate_tokens(content)),
            wall_time: started.elapsed(),
        };
        Attempt::Done(Completion {
            text: content.to_string(),
            usage,
        })
    }
}

impl ChatGateway for OpenAiGateway {
    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        let attempts = self.config.max_retries.max(1);
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for n in 1..=attempts {
            match self.attempt(prompt) {
                Attempt::Done(c) => {
                    debug!(attempt = n, "chat completion succeeded");
                    return Ok(c);
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    warn!(attempt = n, error = %msg, "transient chat failure");
                    last = msg;
                    if n < attempts {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(GatewayError::Unavailable {
            attempts,
            message: last,
        })
    }
}
