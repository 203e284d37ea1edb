//! Model invocation boundary.
//!
//! Every model call in the pipeline goes through [`Backend::complete`].
//! [`HttpChatBackend`] talks to OpenAI-compatible chat completion endpoints,
//! [`ScriptedBackend`] answers from a rule table for offline runs, and
//! [`FnBackend`] wraps a closure for programmatic fixtures. The registry
//! wraps each backend in a [`Limited`] handle so in-flight calls never
//! exceed the configured `max_concurrency`, no matter how many pipeline
//! workers share it.

mod http;
mod scripted;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{parallel_map, Semaphore};

pub use http::HttpChatBackend;
pub use scripted::{load_rules, RuleMatch, ScriptedBackend, ScriptedFailure, ScriptedRule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {0}")]
    HttpStatus(u16),
    #[error("no scripted rule matched the prompt")]
    NoRuleMatched,
    #[error("auth token env var `{0}` is not set")]
    AuthMissing(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("invalid backend config: {0}")]
    Config(String),
}

impl BackendError {
    /// Whether a retry with the same request body may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Transport(_) => true,
            BackendError::HttpStatus(code) => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u32,
    pub completion: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub latency: Duration,
    pub token_counts: Option<TokenCounts>,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError>;

    /// In-flight bound used by [`complete_batch`] and the registry limiter.
    fn max_concurrency(&self) -> usize {
        DEFAULT_CONCURRENCY
    }
}

pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Scripted,
}

fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    2
}
fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}
fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub id: String,
    pub kind: BackendKind,
    /// Full chat-completions URL (HttpChat only).
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// JSON Lines rule file (Scripted only).
    #[serde(default)]
    pub rules: Option<PathBuf>,
    /// Artificial per-call latency for scripted backends.
    #[serde(default)]
    pub latency_ms: u64,
}

impl BackendSpec {
    pub fn scripted(id: impl Into<String>) -> Self {
        BackendSpec {
            id: id.into(),
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: String::new(),
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            retry_backoff_ms: default_backoff(),
            auth_token_env: None,
            max_concurrency: DEFAULT_CONCURRENCY,
            rules: None,
            latency_ms: 0,
        }
    }

    pub fn http(id: impl Into<String>, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendSpec {
            kind: BackendKind::HttpChat,
            endpoint: Some(endpoint.into()),
            model_name: model.into(),
            ..BackendSpec::scripted(id)
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.001))
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0) {
            return Err(BackendError::Config(format!("{}: temperature must be >= 0", self.id)));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::Config(format!("{}: max_output_tokens must be positive", self.id)));
        }
        if self.max_concurrency == 0 {
            return Err(BackendError::Config(format!("{}: max_concurrency must be positive", self.id)));
        }
        match self.kind {
            BackendKind::HttpChat if self.endpoint.is_none() => {
                Err(BackendError::Config(format!("{}: http_chat requires an endpoint", self.id)))
            }
            BackendKind::Scripted if self.rules.is_none() => {
                Err(BackendError::Config(format!("{}: scripted requires a rules file", self.id)))
            }
            _ => Ok(()),
        }
    }

    /// Instantiates the backend. Relative rule paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Arc<dyn Backend>, BackendError> {
        self.validate()?;
        match self.kind {
            BackendKind::HttpChat => Ok(Arc::new(HttpChatBackend::new(self.clone())?)),
            BackendKind::Scripted => {
                let path = base_dir.join(self.rules.as_ref().expect("validated"));
                let rules = load_rules(&path)?;
                let backend = ScriptedBackend::new(self.id.clone(), rules)
                    .with_latency(Duration::from_millis(self.latency_ms))
                    .with_max_concurrency(self.max_concurrency);
                Ok(Arc::new(backend))
            }
        }
    }
}

/// Backend computed by a closure; handy for programmatic fixtures.
pub struct FnBackend<F> {
    id: String,
    f: F,
    max_concurrency: usize,
}

impl<F> FnBackend<F>
where
    F: Fn(&str) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnBackend { id: id.into(), f, max_concurrency: DEFAULT_CONCURRENCY }
    }

    pub fn with_max_concurrency(mut self, n: usize) -> Self {
        self.max_concurrency = n.max(1);
        self
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&str) -> Result<String, BackendError> + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let start = std::time::Instant::now();
        let text = (self.f)(prompt)?;
        Ok(CompletionResult { text, latency: start.elapsed(), token_counts: None })
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }
}

/// Wraps a backend so concurrent callers share one in-flight bound.
pub struct Limited {
    inner: Arc<dyn Backend>,
    permits: Semaphore,
}

impl Limited {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        let permits = Semaphore::new(inner.max_concurrency());
        Limited { inner, permits }
    }
}

impl Backend for Limited {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        let _permit = self.permits.acquire();
        self.inner.complete(prompt)
    }

    fn max_concurrency(&self) -> usize {
        self.inner.max_concurrency()
    }
}

/// Backends addressable by id.
#[derive(Default, Clone)]
pub struct BackendRegistry {
    backends: HashMap<String, Arc<dyn Backend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_specs(specs: &[BackendSpec], base_dir: &Path) -> Result<Self, BackendError> {
        let mut reg = BackendRegistry::new();
        for spec in specs {
            if reg.backends.contains_key(&spec.id) {
                return Err(BackendError::Config(format!("duplicate backend id `{}`", spec.id)));
            }
            reg.insert(spec.build(base_dir)?);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, backend: Arc<dyn Backend>) {
        let id = backend.id().to_string();
        self.backends.insert(id, Arc::new(Limited::new(backend)));
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Backend>, BackendError> {
        self.backends
            .get(id)
            .cloned()
            .ok_or_else(|| BackendError::UnknownBackend(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BatchError {
    #[error("batch is empty")]
    Empty,
    #[error("all {count} requests failed; first error: {first}")]
    AllFailed { count: usize, first: BackendError },
}

/// Completes every prompt with at most `backend.max_concurrency()` requests
/// in flight. `results[i]` always belongs to `prompts[i]`; individual failures
/// stay in their slot unless every request failed.
pub fn complete_batch<S: AsRef<str> + Sync>(
    backend: &dyn Backend,
    prompts: &[S],
) -> Result<Vec<Result<CompletionResult, BackendError>>, BatchError> {
    if prompts.is_empty() {
        return Err(BatchError::Empty);
    }
    let results = parallel_map(prompts, backend.max_concurrency(), |_, p| {
        backend.complete(p.as_ref())
    });
    if results.iter().all(Result::is_err) {
        let first = results.into_iter().find_map(Result::err).expect("non-empty");
        return Err(BatchError::AllFailed { count: prompts.len(), first });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::Ordering;

    use super::*;

    fn rule(m: RuleMatch, response: &str) -> ScriptedRule {
        ScriptedRule::new(m, response)
    }

    #[test]
    fn batch_preserves_order() {
        let backend = ScriptedBackend::new(
            "s",
            vec![
                rule(RuleMatch::ContainsSubstring("one".into()), "1"),
                rule(RuleMatch::ContainsSubstring("two".into()), "2"),
                rule(RuleMatch::Always, "other"),
            ],
        );
        let out = complete_batch(&backend, &["two", "one", "three"]).unwrap();
        let texts: Vec<_> = out.into_iter().map(|r| r.unwrap().text).collect();
        assert_eq!(texts, ["2", "1", "other"]);
    }

    #[test]
    fn batch_keeps_partial_failures_in_place() {
        let backend = ScriptedBackend::new(
            "s",
            vec![
                ScriptedRule::failing(RuleMatch::ContainsSubstring("slow".into()), ScriptedFailure::Timeout),
                rule(RuleMatch::Always, "ok"),
            ],
        );
        let out = complete_batch(&backend, &["a", "slow", "b"]).unwrap();
        assert!(out[0].is_ok());
        assert_eq!(out[1], Err(BackendError::Timeout));
        assert!(out[2].is_ok());
    }

    #[test]
    fn batch_fails_wholesale_only_when_all_fail() {
        let backend = ScriptedBackend::new("s", vec![]);
        assert_eq!(
            complete_batch(&backend, &["a", "b"]),
            Err(BatchError::AllFailed { count: 2, first: BackendError::NoRuleMatched })
        );
        assert_eq!(complete_batch::<&str>(&backend, &[]), Err(BatchError::Empty));
    }

    #[test]
    fn batch_respects_concurrency_limit() {
        let backend = ScriptedBackend::new("s", vec![rule(RuleMatch::Always, "ok")])
            .with_latency(Duration::from_millis(2));
        let prompts: Vec<String> = (0..100).map(|i| format!("p{i}")).collect();
        let out = complete_batch(&backend, &prompts).unwrap();
        assert_eq!(out.len(), 100);
        let peak = backend.stats().max_in_flight.load(Ordering::SeqCst);
        assert!(peak <= 4, "peak in-flight {peak}");
        assert!(peak >= 2, "workers never overlapped (peak {peak})");
    }

    #[test]
    fn registry_limits_shared_backend() {
        let inner = Arc::new(
            ScriptedBackend::new("s", vec![rule(RuleMatch::Always, "ok")])
                .with_latency(Duration::from_millis(2))
                .with_max_concurrency(2),
        );
        let mut reg = BackendRegistry::new();
        reg.insert(inner.clone());
        let handle = reg.get("s").unwrap();
        let items = vec![(); 30];
        parallel_map(&items, 8, |_, _| handle.complete("x").unwrap());
        assert!(inner.stats().max_in_flight.load(Ordering::SeqCst) <= 2);
        assert!(matches!(reg.get("nope"), Err(BackendError::UnknownBackend(_))));
    }

    #[test]
    fn spec_validation() {
        let mut spec = BackendSpec::http("h", "http://localhost:1/v1/chat/completions", "m");
        assert!(spec.validate().is_ok());
        spec.temperature = -1.0;
        assert!(spec.validate().is_err());
        let scripted = BackendSpec::scripted("s");
        assert!(matches!(scripted.validate(), Err(BackendError::Config(_))));
        let toml_spec: BackendSpec = toml::from_str(
            "id = \"x\"\nkind = \"http_chat\"\nendpoint = \"http://e\"\nmodel_name = \"m\"",
        )
        .unwrap();
        assert_eq!(toml_spec.temperature, 0.0);
        assert_eq!(toml_spec.max_concurrency, 4);
    }
}
