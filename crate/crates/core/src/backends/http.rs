use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{Backend, BackendError, BackendSpec, CompletionResult, TokenCounts};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

/// Client for OpenAI-compatible `/chat/completions` endpoints.
///
/// Each prompt is sent as a single user message. Transient failures
/// (timeouts, transport errors, 429 and 5xx) are retried with exponential
/// backoff, re-sending the exact same request body.
pub struct HttpChatBackend {
    spec: BackendSpec,
    endpoint: String,
    token: Option<String>,
    agent: Agent,
}

impl HttpChatBackend {
    pub fn new(spec: BackendSpec) -> Result<Self, BackendError> {
        spec.validate()?;
        let endpoint = spec.endpoint.clone().expect("validated");
        let token = match &spec.auth_token_env {
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Some(v),
                _ => return Err(BackendError::AuthMissing(var.clone())),
            },
            None => None,
        };
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(spec.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpChatBackend { spec, endpoint, token, agent })
    }

    pub fn request_body(&self, prompt: &str) -> Vec<u8> {
        let req = ChatRequest {
            model: &self.spec.model_name,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: self.spec.temperature,
            max_tokens: self.spec.max_output_tokens,
        };
        serde_json::to_vec(&req).expect("request serializes")
    }

    fn attempt(&self, body: &[u8]) -> Result<CompletionResult, BackendError> {
        let start = Instant::now();
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(map_ureq_error)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::HttpStatus(status));
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::MalformedResponse("no choices[0].message.content".into()))?;
        Ok(CompletionResult {
            text,
            latency: start.elapsed(),
            token_counts: parsed.usage.map(|u| TokenCounts {
                prompt: u.prompt_tokens,
                completion: u.completion_tokens,
            }),
        })
    }
}

fn map_ureq_error(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::StatusCode(code) => BackendError::HttpStatus(code),
        other => BackendError::Transport(other.to_string()),
    }
}

impl Backend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.spec.id
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let body = self.request_body(prompt);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if e.is_transient() && attempt < self.spec.max_retries => {
                    let backoff = Duration::from_millis(self.spec.retry_backoff_ms << attempt.min(16));
                    warn!("{}: {e}; retrying in {backoff:?}", self.spec.id);
                    std::thread::sleep(backoff);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn max_concurrency(&self) -> usize {
        self.spec.max_concurrency
    }
}
