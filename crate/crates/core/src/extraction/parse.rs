//! Total parsers for model output. Nothing here fails: whatever cannot be
//! read becomes unknown, and a response that yields nothing usable is
//! flagged as a format error.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::types::{Finding, FindingShape, MaybeNumber, OutcomeType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedType {
    pub outcome_type: OutcomeType,
    pub format_error: bool,
}

/// Reads a one-word type answer, ignoring case, surrounding whitespace and
/// wrapping punctuation (quotes, backticks, asterisks, a trailing period).
pub fn parse_outcome_type(model_text: &str) -> ParsedType {
    let word = model_text
        .trim()
        .trim_matches(|c: char| matches!(c, '.' | '"' | '\'' | '`' | '*' | ':') || c.is_whitespace())
        .to_ascii_lowercase();
    let outcome_type = match word.as_str() {
        "binary" => Some(OutcomeType::Binary),
        "continuous" => Some(OutcomeType::Continuous),
        "x" => Some(OutcomeType::Unknown),
        _ => None,
    };
    ParsedType {
        outcome_type: outcome_type.unwrap_or(OutcomeType::Unknown),
        format_error: outcome_type.is_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedFinding {
    pub finding: Finding,
    /// No schema field could be read from the response at all.
    pub format_error: bool,
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z]*[ \t]*\r?\n(.*?)```").expect("valid regex"));

static KEY_VALUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:[-*]\s*)?([A-Za-z_]+)\s*:\s*(.*?)\s*$").expect("valid regex")
});

/// The fenced block if there is one, otherwise the whole response.
fn yaml_block(text: &str) -> &str {
    FENCE
        .captures(text)
        .and_then(|c| c.get(1))
        .map(|m| m.as_str())
        .unwrap_or(text)
}

fn number_from_text(raw: &str) -> MaybeNumber {
    let t = raw.trim().trim_matches(|c| c == '"' || c == '\'');
    // Reports sometimes print negatives with a doubled hyphen.
    let t = match t.strip_prefix("--") {
        Some(rest) if rest.starts_with(|c: char| c.is_ascii_digit()) => &t[1..],
        _ => t,
    };
    t.parse().unwrap_or(MaybeNumber::Unknown)
}

fn number_from_yaml(value: &serde_yaml::Value) -> MaybeNumber {
    match value {
        serde_yaml::Value::Number(n) => n.as_f64().map(MaybeNumber::known).unwrap_or_default(),
        serde_yaml::Value::String(s) => number_from_text(s),
        _ => MaybeNumber::Unknown,
    }
}

fn from_yaml(block: &str, shape: FindingShape) -> Option<(Vec<MaybeNumber>, usize)> {
    let value: serde_yaml::Value = serde_yaml::from_str(block).ok()?;
    let map = value.as_mapping()?;
    let mut seen = 0;
    let values = shape
        .field_names()
        .iter()
        .map(|key| match map.get(*key) {
            Some(v) => {
                seen += 1;
                number_from_yaml(v)
            }
            None => MaybeNumber::Unknown,
        })
        .collect();
    Some((values, seen))
}

/// Line-oriented fallback for responses that wrap `key: value` lines in prose.
fn from_lines(text: &str, shape: FindingShape) -> (Vec<MaybeNumber>, usize) {
    let names = shape.field_names();
    let mut values = vec![None; names.len()];
    for line in text.lines() {
        let Some(caps) = KEY_VALUE.captures(line) else {
            continue;
        };
        let key = caps[1].to_ascii_lowercase();
        if let Some(i) = names.iter().position(|n| *n == key) {
            values[i].get_or_insert_with(|| number_from_text(&caps[2]));
        }
    }
    let seen = values.iter().filter(|v| v.is_some()).count();
    (values.into_iter().map(Option::unwrap_or_default).collect(), seen)
}

/// Reads a finding of the given shape from a model response.
pub fn parse_finding(model_text: &str, shape: FindingShape) -> ParsedFinding {
    let block = yaml_block(model_text);
    let (values, seen) = match from_yaml(block, shape) {
        Some((values, seen)) if seen > 0 => (values, seen),
        _ => from_lines(model_text, shape),
    };
    ParsedFinding {
        finding: Finding::from_values(shape, &values),
        format_error: seen == 0,
    }
}
