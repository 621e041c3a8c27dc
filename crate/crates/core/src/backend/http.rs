use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::{debug, warn};

use super::wire::{parse_completion_response, CompletionBody, COMPLETIONS_PATH};
use super::{Capability, CompletionRequest, LMBackend};
use crate::error::{Error, Result};
use crate::types::AnswerDistribution;

pub const API_KEY_ENV: &str = "LATENT_RECALL_API_KEY";

const BODY_EXCERPT_LEN: usize = 512;

/// Base of the logprobs a server reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
    Two,
}

impl LogBase {
    pub fn to_natural(self, logprob: f64) -> f64 {
        match self {
            LogBase::Natural => logprob,
            LogBase::Ten => logprob * std::f64::consts::LN_10,
            LogBase::Two => logprob * std::f64::consts::LN_2,
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "natural" | "ln" => Ok(LogBase::Natural),
            "10" | "ten" => Ok(LogBase::Ten),
            "2" | "two" => Ok(LogBase::Two),
            other => Err(Error::Config(format!("unknown log base {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    /// Server root, e.g. `http://127.0.0.1:8000`; `/v1/completions` is appended.
    pub base_url: String,
    pub model: Option<String>,
    pub api_key: Option<String>,
    /// Largest `logprobs` value the server accepts.
    pub max_top_logprobs: usize,
    pub log_base: LogBase,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: None,
            api_key: None,
            max_top_logprobs: 20,
            log_base: LogBase::Natural,
            max_attempts: 3,
            backoff_base: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }

    /// Reads the bearer token from `LATENT_RECALL_API_KEY` when set.
    pub fn with_env_api_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }

    pub fn completions_url(&self) -> String {
        format!("{}{}", self.base_url, COMPLETIONS_PATH)
    }
}

/// Client for OpenAI-compatible completion servers. Safe to share across threads.
pub struct HttpBackend {
    config: EndpointConfig,
    agent: ureq::Agent,
    retries: AtomicU64,
}

enum Attempt {
    Retry(Error),
    Fatal(Error),
}

impl HttpBackend {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self {
            config,
            agent,
            retries: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Retries performed so far across all requests.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    /// Fails when the endpoint cannot serve `k` alternatives per position.
    pub fn ensure_capability(&self, k: usize) -> Result<()> {
        if k > self.config.max_top_logprobs {
            return Err(Error::Capability {
                requested: k,
                max: self.config.max_top_logprobs,
            });
        }
        Ok(())
    }

    fn post_once(&self, body: &CompletionBody) -> std::result::Result<Value, Attempt> {
        let mut req = self
            .agent
            .post(&self.config.completions_url())
            .set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let payload = serde_json::to_string(body).map_err(|e| Attempt::Fatal(e.into()))?;
        match req.send_string(&payload) {
            Ok(resp) => {
                let text = resp
                    .into_string()
                    .map_err(|e| Attempt::Retry(Error::Transport(e.to_string())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Attempt::Fatal(Error::Schema(format!("response is not JSON: {e}"))))
            }
            Err(ureq::Error::Status(status, resp)) => {
                let mut body = resp.into_string().unwrap_or_default();
                if body.len() > BODY_EXCERPT_LEN {
                    let mut cut = BODY_EXCERPT_LEN;
                    while !body.is_char_boundary(cut) {
                        cut -= 1;
                    }
                    body.truncate(cut);
                }
                let err = Error::HttpStatus { status, body };
                if status >= 500 || status == 429 {
                    Err(Attempt::Retry(err))
                } else {
                    Err(Attempt::Fatal(err))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Attempt::Retry(Error::Transport(t.to_string()))),
        }
    }

    /// POSTs with exponential backoff on transport errors, 5xx and 429.
    fn post(&self, body: &CompletionBody) -> Result<Value> {
        let attempts = self.config.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.post_once(body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= attempts => return Err(e),
                Err(Attempt::Retry(e)) => {
                    let delay = self.config.backoff_base * 2u32.pow(attempt - 1);
                    warn!(attempt, max_attempts = attempts, ?delay, error = %e, "retrying completion request");
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

impl LMBackend for HttpBackend {
    fn capability(&self) -> Capability {
        Capability {
            max_top_logprobs: self.config.max_top_logprobs,
            supports_echo: false,
        }
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<AnswerDistribution> {
        self.ensure_capability(request.top_k)?;
        let body = CompletionBody::greedy(
            self.config.model.clone(),
            request.prompt,
            request.max_tokens,
            request.top_k,
        );
        debug!(record_id = request.record_id, "completion request");
        let value = self.post(&body)?;
        parse_completion_response(
            &value,
            request.record_id,
            request.probe_position,
            request.top_k,
            self.config.log_base,
        )
    }

    fn describe(&self) -> String {
        format!(
            "http({}, model={}, max_top_logprobs={}, log_base={:?})",
            self.config.base_url,
            self.config.model.as_deref().unwrap_or("-"),
            self.config.max_top_logprobs,
            self.config.log_base
        )
    }
}

/// One-off greedy completion against `endpoint`.
pub fn http_complete(
    prompt: &str,
    top_k: usize,
    max_tokens: usize,
    probe_position: usize,
    endpoint: &EndpointConfig,
) -> Result<AnswerDistribution> {
    HttpBackend::new(endpoint.clone()).complete(&CompletionRequest {
        record_id: "",
        prompt,
        top_k,
        max_tokens,
        probe_position,
    })
}
