//! Chat-completion providers and verdict / choice parsing.
//!
//! Three providers implement [`ChatProvider`]:
//! - [`RemoteChatProvider`]: OpenAI-compatible `/chat/completions` endpoint
//!   with retries and a token-bucket rate limiter.
//! - [`ScriptedProvider`]: looks responses up by prompt hash, never touches
//!   the network.
//! - [`HeuristicProvider`]: answers from the retrieval score recorded in the
//!   prompt, for offline end-to-end runs.

mod parse;
mod remote;
mod scripted;

pub use parse::{parse_choice, parse_verdict};
pub use remote::RemoteChatProvider;
pub use scripted::ScriptedProvider;

use crate::prompt::{PromptKind, PromptSpec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("provider unavailable after {retries} retries: {reason}")]
    ProviderUnavailable { reason: String, retries: u32 },
    #[error("provider timed out after {retries} retries")]
    Timeout { retries: u32 },
    #[error("could not parse response: {0}")]
    ParseFailure(String),
    #[error("choice {choice} outside 1..={n_candidates}")]
    OutOfRange { choice: String, n_candidates: usize },
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
}

impl LlmError {
    /// Transport-level failures, as opposed to unusable response content.
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            LlmError::ProviderUnavailable { .. } | LlmError::Timeout { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Scripted,
    Heuristic,
}

/// Calibrated for the 256-dimension hashed embedder, where unrelated C
/// functions already share enough boilerplate to score around 0.8.
pub const DEFAULT_HEURISTIC_THRESHOLD: f64 = 0.87;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Remote only; `None` disables rate limiting.
    #[serde(default)]
    pub requests_per_second: Option<f64>,
    /// Scripted only: JSON map of prompt SHA-256 to response text.
    #[serde(default)]
    pub scripted_path: Option<PathBuf>,
    /// Scripted only: reply for prompts missing from the map.
    #[serde(default = "default_response")]
    pub default_response: String,
    /// Heuristic only.
    #[serde(default = "default_threshold")]
    pub heuristic_threshold: f64,
}

fn default_max_retries() -> u32 {
    3
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_response() -> String {
    "VERDICT: 0".to_string()
}
fn default_threshold() -> f64 {
    DEFAULT_HEURISTIC_THRESHOLD
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind) -> Self {
        Self {
            kind,
            endpoint: None,
            model_id: None,
            temperature: 0.0,
            max_retries: default_max_retries(),
            timeout_secs: default_timeout_secs(),
            requests_per_second: None,
            scripted_path: None,
            default_response: default_response(),
            heuristic_threshold: default_threshold(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidConfig("temperature must be >= 0".into()));
        }
        if self.kind == ProviderKind::Remote {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::InvalidConfig(
                    "remote provider needs an endpoint".into(),
                ));
            }
            if self.model_id.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::InvalidConfig(
                    "remote provider needs a model id".into(),
                ));
            }
        }
        if let Some(rps) = self.requests_per_second {
            if rps.is_nan() || rps <= 0.0 {
                return Err(LlmError::InvalidConfig(
                    "requests_per_second must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Instantiates the provider; `api_key` is only used by the remote kind.
    pub fn build(&self, api_key: Option<String>) -> Result<Box<dyn ChatProvider>, LlmError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Remote => {
                let transport = crate::transport::ReqwestTransport::new()
                    .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
                Box::new(RemoteChatProvider::new(
                    self.clone(),
                    api_key,
                    Box::new(transport),
                )?)
            }
            ProviderKind::Scripted => Box::new(match &self.scripted_path {
                Some(p) => ScriptedProvider::from_file(p, &self.default_response)?,
                None => ScriptedProvider::constant(&self.default_response),
            }),
            ProviderKind::Heuristic => Box::new(HeuristicProvider::new(self.heuristic_threshold)),
        })
    }
}

/// Raw provider output for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub retries_used: u32,
    pub latency: Duration,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl Completion {
    pub fn immediate(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            retries_used: 0,
            latency: Duration::ZERO,
            prompt_tokens: None,
            completion_tokens: None,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    /// `remote`, `scripted` or `heuristic`, plus model details where relevant.
    fn describe(&self) -> String;

    fn complete(&self, prompt: &PromptSpec) -> Result<Completion, LlmError>;

    /// Whether equal prompts always give equal responses.
    fn is_deterministic(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Parsed,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: u8,
    pub raw_response: String,
    pub parse_status: ParseStatus,
    pub retries_used: u32,
}

/// Offline stand-in for a model that trusts retrieval: a classification
/// prompt gets `VERDICT: 1` iff its best CONTEXT similarity exceeds the
/// threshold (so prompts without context get `VERDICT: 0`). A rerank prompt
/// gets the highest-scoring candidate, lowest number on ties.
#[derive(Debug)]
pub struct HeuristicProvider {
    threshold: f64,
    calls: AtomicUsize,
}

impl HeuristicProvider {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn respond(&self, prompt: &PromptSpec) -> String {
        match prompt.kind {
            PromptKind::Rerank => {
                let mut best = 0;
                for (i, c) in prompt.candidates.iter().enumerate() {
                    if c.score > prompt.candidates[best].score {
                        best = i;
                    }
                }
                format!("CHOICE: {}", best + 1)
            }
            PromptKind::Classification => {
                let score = prompt.max_context_score();
                let label = u8::from(score.is_some_and(|s| s > self.threshold));
                if prompt.cot_enabled {
                    let reason = match score {
                        Some(s) => {
                            format!("Closest known vulnerable example has similarity {s:.4}.")
                        }
                        None => "No retrieved context to compare against.".to_string(),
                    };
                    format!(
                        "{reason}\nThreshold is {:.4}.\nVERDICT: {label}",
                        self.threshold
                    )
                } else {
                    format!("VERDICT: {label}")
                }
            }
        }
    }
}

impl ChatProvider for HeuristicProvider {
    fn describe(&self) -> String {
        format!("heuristic(threshold={})", self.threshold)
    }

    fn complete(&self, prompt: &PromptSpec) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(Completion::immediate(self.respond(prompt)))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
