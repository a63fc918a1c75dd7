//! Prompt assembly, completion backends and structured-output parsing.
//!
//! Every LLM interaction in the crate goes through [`complete_structured`]:
//! render a [`PromptBundle`], call a [`CompletionBackend`], parse the raw
//! text against the stage schema, and re-prompt with a rejection note when
//! the output is malformed. Backend errors are never retried here (the HTTP
//! backend retries transport failures internally).

mod backend;
mod http;
mod lexicon;
pub(crate) mod mock;
mod payload;
mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    build_backend, complete, BackendConfig, BackendError, BackendKind, CompletionBackend,
    ScriptedBackend,
};
pub use http::HttpBackend;
pub use lexicon::{lexicon_valence, Lexicon, LexiconEntry, LexiconFile, LexiconScore};
pub use mock::{MockBackend, MockRules};
pub use payload::{parse_payload, ParseError, ReflectionItem, StructuredPayload};
pub use prompt::{sha256_hex, PromptBundle, Section, SectionTag, NO_MEMORIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    DescribePersona,
    Appraise,
    SelectAction,
    Reflect,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::DescribePersona,
        Stage::Appraise,
        Stage::SelectAction,
        Stage::Reflect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::DescribePersona => "describe_persona",
            Stage::Appraise => "appraise",
            Stage::SelectAction => "select_action",
            Stage::Reflect => "reflect",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{error} (after {attempts} attempts)")]
    Parse { error: ParseError, attempts: u32 },
}

/// A parsed and accepted backend answer plus bookkeeping for the turn trace.
#[derive(Debug, Clone)]
pub struct StructuredOutcome<T> {
    pub value: T,
    pub attempts: u32,
    /// Hash of the bundle actually sent on the accepted attempt.
    pub prompt_hash: String,
    pub response_hash: String,
}

/// Call `backend` until its output parses for `bundle.stage` and `accept`
/// takes it, at most `retry_budget + 1` times.
///
/// `accept` lets callers add checks beyond the schema (for example action
/// validation); its error string is fed back in the next prompt. A failure
/// on the last attempt surfaces as [`LlmError::Parse`].
pub fn complete_structured<T>(
    backend: &dyn CompletionBackend,
    retry_budget: u32,
    bundle: &PromptBundle,
    mut accept: impl FnMut(StructuredPayload) -> Result<T, String>,
) -> Result<StructuredOutcome<T>, LlmError> {
    let mut current = bundle.clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let raw = backend.complete(&current)?;
        let result = parse_payload(bundle.stage, &raw).and_then(|payload| {
            accept(payload).map_err(|constraint| ParseError {
                stage: bundle.stage,
                constraint,
            })
        });
        match result {
            Ok(value) => {
                return Ok(StructuredOutcome {
                    value,
                    attempts,
                    prompt_hash: current.hash(),
                    response_hash: sha256_hex(raw.as_bytes()),
                })
            }
            Err(error) if attempts > retry_budget => {
                return Err(LlmError::Parse { error, attempts });
            }
            Err(error) => {
                tracing::debug!(stage = %bundle.stage, %error, attempts, "re-prompting");
                current = bundle.with_feedback(&error.constraint);
            }
        }
    }
}
