use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, CompletionResult, DEFAULT_CONCURRENCY};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum RuleMatch {
    ContainsSubstring(String),
    /// Lowercase hex SHA-256 of the full prompt.
    PromptHashEquals(String),
    Always,
}

impl RuleMatch {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            RuleMatch::ContainsSubstring(s) => prompt.contains(s.as_str()),
            RuleMatch::PromptHashEquals(hex) => prompt_sha256(prompt).eq_ignore_ascii_case(hex),
            RuleMatch::Always => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ScriptedFailure {
    Timeout,
    HttpStatus(u16),
}

/// One line of a rule file. Rules are tried in order; the first match wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedRule {
    #[serde(rename = "match")]
    pub matcher: RuleMatch,
    #[serde(default)]
    pub response: String,
    /// The rule fires at most once per backend instance.
    #[serde(default)]
    pub consume_once: bool,
    /// Simulated failure returned instead of `response`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<ScriptedFailure>,
}

impl ScriptedRule {
    pub fn new(matcher: RuleMatch, response: impl Into<String>) -> Self {
        ScriptedRule { matcher, response: response.into(), consume_once: false, fail: None }
    }

    pub fn once(matcher: RuleMatch, response: impl Into<String>) -> Self {
        ScriptedRule { consume_once: true, ..ScriptedRule::new(matcher, response) }
    }

    pub fn failing(matcher: RuleMatch, failure: ScriptedFailure) -> Self {
        ScriptedRule { fail: Some(failure), ..ScriptedRule::new(matcher, "") }
    }
}

pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Reads a JSON Lines rule file; blank lines are skipped.
pub fn load_rules(path: &Path) -> Result<Vec<ScriptedRule>, BackendError> {
    let text = fs::read_to_string(path)
        .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| {
                BackendError::Config(format!("{}:{}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct ScriptedStats {
    pub calls: AtomicU64,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
}

/// Deterministic backend driven by an ordered rule table.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    rules: Vec<ScriptedRule>,
    consumed: Vec<AtomicBool>,
    latency: Duration,
    max_concurrency: usize,
    stats: ScriptedStats,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>, rules: Vec<ScriptedRule>) -> Self {
        let consumed = rules.iter().map(|_| AtomicBool::new(false)).collect();
        ScriptedBackend {
            id: id.into(),
            rules,
            consumed,
            latency: Duration::ZERO,
            max_concurrency: DEFAULT_CONCURRENCY,
            stats: ScriptedStats::default(),
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_max_concurrency(mut self, n: usize) -> Self {
        self.max_concurrency = n.max(1);
        self
    }

    pub fn stats(&self) -> &ScriptedStats {
        &self.stats
    }

    fn pick(&self, prompt: &str) -> Option<&ScriptedRule> {
        self.rules.iter().zip(&self.consumed).find_map(|(rule, used)| {
            if !rule.matcher.matches(prompt) {
                return None;
            }
            if rule.consume_once
                && used.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_err()
            {
                return None;
            }
            Some(rule)
        })
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResult, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let start = Instant::now();
        self.stats.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let outcome = match self.pick(prompt) {
            None => Err(BackendError::NoRuleMatched),
            Some(ScriptedRule { fail: Some(ScriptedFailure::Timeout), .. }) => Err(BackendError::Timeout),
            Some(ScriptedRule { fail: Some(ScriptedFailure::HttpStatus(code)), .. }) => {
                Err(BackendError::HttpStatus(*code))
            }
            Some(rule) => Ok(CompletionResult {
                text: rule.response.clone(),
                latency: start.elapsed(),
                token_counts: None,
            }),
        };
        self.stats.in_flight.fetch_sub(1, Ordering::SeqCst);
        outcome
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }
}
