//! Answer matching shared by labeling and scoring.
//!
//! Normalization: lowercase, collapse whitespace runs, trim. Aliases are
//! additionally stripped of any leading/trailing run of punctuation and
//! spaces. A match is a plain substring test on the normalized forms.

use serde::{Deserialize, Serialize};

/// Which part of a generation is matched against the gold answers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerScope {
    #[default]
    FullText,
    /// Only the text after the last sentence boundary.
    ConclusionOnly,
}

pub fn normalize_text(text: &str) -> String {
    if text.is_ascii() {
        normalize_ascii(text)
    } else {
        normalize_chars(text)
    }
}

fn normalize_chars(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

fn normalize_ascii(text: &str) -> String {
    let mut out = Vec::with_capacity(text.len());
    let mut pending_space = false;
    for &b in text.as_bytes() {
        if b.is_ascii_whitespace() || b == 0x0b {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(b' ');
                pending_space = false;
            }
            out.push(b.to_ascii_lowercase());
        }
    }
    String::from_utf8(out).expect("ASCII input")
}

pub fn normalize_alias(alias: &str) -> String {
    let text = normalize_text(alias);
    text.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
}

/// True if `alias` occurs in `normalized_text` (already passed through
/// [`normalize_text`]). Aliases that normalize to nothing never match.
pub fn contains_alias(normalized_text: &str, alias: &str) -> bool {
    let alias = normalize_alias(alias);
    !alias.is_empty() && normalized_text.contains(&alias)
}

pub fn contains_any(normalized_text: &str, aliases: &[String]) -> bool {
    aliases.iter().any(|a| contains_alias(normalized_text, a))
}

fn scoped(prediction: &str, scope: AnswerScope) -> &str {
    match scope {
        AnswerScope::FullText => prediction,
        AnswerScope::ConclusionOnly => last_sentence(prediction),
    }
}

fn last_sentence(text: &str) -> &str {
    let text = text.trim();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary = match c {
            '\n' => true,
            '.' | '!' | '?' => chars.peek().is_some_and(|(_, n)| n.is_whitespace()),
            _ => false,
        };
        if boundary {
            start = i + c.len_utf8();
        }
    }
    &text[start..]
}

/// 1 when any gold alias appears in the prediction.
pub fn accuracy(prediction: &str, gold_answers: &[String]) -> bool {
    accuracy_scoped(prediction, gold_answers, AnswerScope::FullText)
}

pub fn accuracy_scoped(prediction: &str, gold_answers: &[String], scope: AnswerScope) -> bool {
    let text = normalize_text(scoped(prediction, scope));
    contains_any(&text, gold_answers)
}

/// Fraction of short-answer sets with at least one alias in the prediction.
pub fn str_em(prediction: &str, short_answer_sets: &[Vec<String>]) -> f64 {
    str_em_scoped(prediction, short_answer_sets, AnswerScope::FullText)
}

pub fn str_em_scoped(prediction: &str, sets: &[Vec<String>], scope: AnswerScope) -> f64 {
    if sets.is_empty() {
        return 0.0;
    }
    let text = normalize_text(scoped(prediction, scope));
    let covered = sets.iter().filter(|set| contains_any(&text, set)).count();
    covered as f64 / sets.len() as f64
}
