//! Chat-completions client over blocking HTTP.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{cut_at_stop, Backend, BackendError, FinishReason, ModelRequest, ModelResponse};
use crate::sync::Semaphore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// First backoff delay; doubles on each retry.
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            api_key: None,
            timeout_secs: 120.0,
            max_retries: 3,
            backoff_base_ms: 1000,
            max_in_flight: 8,
        }
    }
}

impl HttpConfig {
    /// Overlays `RE_REST_ENDPOINT`, `RE_REST_MODEL` and `RE_REST_API_KEY`.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("RE_REST_ENDPOINT") {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var("RE_REST_MODEL") {
            self.model = v;
        }
        if let Ok(v) = std::env::var("RE_REST_API_KEY") {
            self.api_key = Some(v);
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    in_flight: Semaphore,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.endpoint.is_empty() {
            return Err(BackendError::InvalidRequest("no endpoint configured (set RE_REST_ENDPOINT)".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::EndpointUnreachable(e.to_string()))?;
        let in_flight = Semaphore::new(config.max_in_flight.max(1));
        Ok(Self { config, client, in_flight })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn body(&self, request: &ModelRequest, n: usize) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "n": n,
            "max_tokens": request.max_new_tokens,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = json!(request.stop_sequences);
        }
        body
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<ChatResponse, Attempt> {
        let _permit = self.in_flight.acquire();
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(BackendError::Timeout)
            } else {
                Attempt::Retry(BackendError::EndpointUnreachable(e.to_string()))
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(BackendError::EndpointUnreachable(e.to_string())))?;
        if !status.is_success() {
            let err = BackendError::ProviderError { status: status.as_u16(), body: text };
            return Err(if status.as_u16() == 429 || status.is_server_error() { Attempt::Retry(err) } else { Attempt::Fatal(err) });
        }
        serde_json::from_str(&text).map_err(|e| Attempt::Fatal(BackendError::Decode(e.to_string())))
    }

    fn call(&self, body: &serde_json::Value) -> Result<ChatResponse, BackendError> {
        let mut delay = Duration::from_millis(self.config.backoff_base_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(body) {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempt >= self.config.max_retries {
                        return Err(e);
                    }
                    tracing::warn!(attempt, error = %e, "retrying model request");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

fn finish_reason(raw: Option<&str>) -> FinishReason {
    match raw {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    }
}

impl Backend for HttpBackend {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.validate()?;
        let mut completions = Vec::with_capacity(request.n);
        let mut finish_reasons = Vec::with_capacity(request.n);
        // Providers may return fewer than n choices; ask again for the rest.
        let mut empty_rounds = 0;
        while completions.len() < request.n {
            let remaining = request.n - completions.len();
            let resp = self.call(&self.body(request, remaining))?;
            if resp.choices.is_empty() {
                empty_rounds += 1;
                if empty_rounds > self.config.max_retries {
                    return Err(BackendError::Decode("provider returned no choices".into()));
                }
                continue;
            }
            for choice in resp.choices.into_iter().take(remaining) {
                let content = choice.message.content.unwrap_or_default();
                completions.push(cut_at_stop(&content, &request.stop_sequences).0.to_string());
                finish_reasons.push(finish_reason(choice.finish_reason.as_deref()));
            }
        }
        Ok(ModelResponse { completions, finish_reasons })
    }
}
