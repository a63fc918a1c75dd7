use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::http::HttpBackend;
use super::mock::MockBackend;
use super::prompt::PromptBundle;

/// Anything that turns a prompt bundle into raw completion text.
///
/// Implementations must be safe to call concurrently from different
/// sessions; retry state lives in the call, not the backend.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited,
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
    #[error("invalid backend config: {0}")]
    Config(String),
}

impl BackendError {
    /// Timeouts, transport failures and rate limiting are retried with
    /// backoff; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Timeout | BackendError::Transport(_) | BackendError::RateLimited
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_API_KEY_ENV: &str = "ROBOCHAR_API_KEY";

/// Backend selection and call policy. The mock ignores `model`,
/// `temperature` and the network fields but honors `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_model() -> String {
    "gpt-4o".into()
}
fn default_retry_budget() -> u32 {
    2
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_endpoint() -> String {
    DEFAULT_ENDPOINT.into()
}
fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.into()
}
fn default_backoff_ms() -> u64 {
    250
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            model: default_model(),
            temperature: 0.0,
            seed: 0,
            retry_budget: default_retry_budget(),
            timeout_ms: default_timeout_ms(),
            endpoint: default_endpoint(),
            api_key_env: default_api_key_env(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        BackendConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.kind == BackendKind::Http {
            if self.timeout_ms == 0 {
                return Err(BackendError::Config("timeout_ms must be positive".into()));
            }
            if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
                return Err(BackendError::Config(format!(
                    "endpoint must be an http(s) URL, got {:?}",
                    self.endpoint
                )));
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Construct the backend named by `config`.
pub fn build_backend(config: &BackendConfig) -> Result<Arc<dyn CompletionBackend>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Mock => Arc::new(MockBackend::new(config.seed)),
        BackendKind::Http => Arc::new(HttpBackend::new(config.clone())),
    })
}

/// One-shot completion: build the configured backend and call it once
/// (the http backend retries transport failures internally).
pub fn complete(config: &BackendConfig, bundle: &PromptBundle) -> Result<String, BackendError> {
    build_backend(config)?.complete(bundle)
}

/// Run `call` up to `retry_budget + 1` times, sleeping
/// `backoff * 2^attempt` between retryable failures.
pub(crate) fn with_retries<T>(
    retry_budget: u32,
    backoff: Duration,
    mut call: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut attempt = 0u32;
    loop {
        match call() {
            Ok(v) => return Ok(v),
            Err(e) if !e.is_retryable() => return Err(e),
            Err(e) if attempt >= retry_budget => {
                return Err(BackendError::Exhausted {
                    attempts: attempt + 1,
                    last: Box::new(e),
                })
            }
            Err(e) => {
                let wait = backoff.saturating_mul(1u32 << attempt.min(16));
                tracing::warn!(error = %e, attempt, ?wait, "backend call failed, retrying");
                std::thread::sleep(wait);
                attempt += 1;
            }
        }
    }
}

/// Test double that replays a fixed list of answers in order. Once the
/// list is used up every call fails with a transport error.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    answers: Mutex<VecDeque<Result<String, BackendError>>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(answers: Vec<Result<String, BackendError>>) -> Self {
        ScriptedBackend {
            answers: Mutex::new(answers.into()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn push(&self, answer: Result<String, BackendError>) {
        self.answers.lock().unwrap().push_back(answer);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, _bundle: &PromptBundle) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.answers
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Transport("script exhausted".into())))
    }
}
