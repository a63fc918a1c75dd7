//! OpenAI-compatible chat-completion backend.
//!
//! Wire request (one per attempt):
//!
//! ```text
//! POST {endpoint}
//! Content-Type: application/json
//! Authorization: Bearer ${api_key_env}      (omitted when the variable is unset)
//!
//! {"model": M, "temperature": T, "seed": S,
//!  "messages": [{"role": "system", "content": SYSTEM_PROMPT},
//!               {"role": "user",   "content": bundle.render()}]}
//! ```
//!
//! The completion text is read from `choices[0].message.content` of the JSON
//! response. Status 408 maps to `Timeout`, 429 to `RateLimited`, 5xx to
//! `Transport`; those are retried with exponential backoff. Any other
//! non-2xx status is returned as `Status` without retrying.

use std::time::Duration;

use serde_json::{json, Value};

use super::backend::{with_retries, BackendConfig, BackendError, CompletionBackend};
use super::prompt::PromptBundle;

pub const SYSTEM_PROMPT: &str =
    "You are the reasoning core of a robot character. Answer with exactly one JSON object that follows the output_schema section.";

pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { config, agent }
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "seed": self.config.seed,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": bundle.render()},
            ],
        })
    }

    fn send_once(&self, body: &Value) -> Result<String, BackendError> {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            if !key.is_empty() {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
        }
        let mut resp = req.send(body.to_string()).map_err(map_transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_transport)?;
        match status {
            200..=299 => extract_content(&text),
            408 => Err(BackendError::Timeout),
            429 => Err(BackendError::RateLimited),
            500..=599 => Err(BackendError::Transport(format!("status {status}"))),
            _ => Err(BackendError::Status {
                status,
                body: text.chars().take(512).collect(),
            }),
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, BackendError> {
        let body = self.request_body(bundle);
        with_retries(
            self.config.retry_budget,
            Duration::from_millis(self.config.backoff_ms),
            || self.send_once(&body),
        )
    }
}

fn map_transport(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        other => BackendError::Transport(other.to_string()),
    }
}

/// Pull `choices[0].message.content` out of a chat-completion response.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::BadResponse(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError::BadResponse("missing choices[0].message.content".into()))
}
