//! Model invocation: the [`Backend`] trait, request/response types, and the
//! stop-sequence handling shared by every implementation.

pub mod http;
pub mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Domain;

pub use http::{HttpBackend, HttpConfig};
pub use scripted::{BankEntry, ScriptedPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Agent,
    Reflector,
}

/// Which generation within an episode a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    /// The free-text reflection preceding a corrected attempt.
    Reflection,
    /// The 1-based model turn within the episode.
    Step(u32),
    /// A single-shot request for a complete output.
    Whole,
}

/// Structured request tag. Renders as `role/domain/task/index/turn` for logs;
/// the scripted backend reads the fields directly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestTag {
    pub role: Role,
    pub domain: Domain,
    pub task_id: String,
    pub sample_index: usize,
    pub turn: TurnKind,
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            Role::Agent => "agent",
            Role::Reflector => "reflector",
        };
        write!(f, "{role}/{}/{}/{}/", self.domain, self.task_id, self.sample_index)?;
        match self.turn {
            TurnKind::Reflection => f.write_str("reflection"),
            TurnKind::Step(t) => write!(f, "step{t}"),
            TurnKind::Whole => f.write_str("whole"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
    pub max_new_tokens: usize,
    pub tag: RequestTag,
}

impl ModelRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.n == 0 {
            return Err(BackendError::InvalidRequest("n must be at least 1".into()));
        }
        if self.stop_sequences.iter().any(|s| s.is_empty()) {
            return Err(BackendError::InvalidRequest("empty stop sequence".into()));
        }
        if self.temperature < 0.0 || self.temperature.is_nan() {
            return Err(BackendError::InvalidRequest("negative temperature".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_new_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub completions: Vec<String>,
    pub finish_reasons: Vec<FinishReason>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("provider error {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    Decode(String),
}

/// A source of completions. Implementations must tolerate concurrent calls.
pub trait Backend: Send + Sync {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).generate(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).generate(request)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).generate(request)
    }
}

/// Cuts `text` at the earliest occurrence of any stop sequence, excluding it.
pub fn cut_at_stop<'a>(text: &'a str, stops: &[String]) -> (&'a str, bool) {
    match stops.iter().filter_map(|s| text.find(s.as_str())).min() {
        Some(pos) => (&text[..pos], true),
        None => (text, false),
    }
}

/// Sentinel that ends one model turn before the environment speaks.
pub fn observation_sentinel(domain: Domain) -> Option<&'static str> {
    match domain {
        Domain::Wikiqa => Some("\nObservation"),
        Domain::Household => Some("\n"),
        Domain::Codeexec => None,
    }
}

/// Requests one completion and returns exactly one model turn: everything
/// after the domain's observation sentinel is discarded, whether or not the
/// provider honoured the stop list.
pub fn generate_stepwise(backend: &dyn Backend, request: &ModelRequest) -> Result<String, BackendError> {
    let mut req = request.clone();
    req.n = 1;
    if let Some(sentinel) = observation_sentinel(req.tag.domain) {
        if !req.stop_sequences.iter().any(|s| s == sentinel) {
            req.stop_sequences.push(sentinel.to_string());
        }
    }
    req.validate()?;
    let response = backend.generate(&req)?;
    let first = response.completions.into_iter().next().ok_or_else(|| BackendError::Decode("no completions returned".into()))?;
    Ok(cut_at_stop(&first, &req.stop_sequences).0.to_string())
}
