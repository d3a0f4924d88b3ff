//! Versioned prompt templates and their instantiation.

use serde::{Deserialize, Serialize};

use super::types::FindingShape;
use super::ExtractionError;
use crate::corpus::{Chunk, IcoRecord, Tokenizer};

/// Bumped whenever a template file changes; recorded in every trace.
pub const PROMPT_VERSION: &str = "v1";

const INFER_TYPE: &str = include_str!("../../prompts/infer_type.txt");
const EXTRACT_BINARY: &str = include_str!("../../prompts/extract_binary.txt");
const EXTRACT_CONTINUOUS: &str = include_str!("../../prompts/extract_continuous.txt");

/// Output budget kept free when sizing chunks.
pub const DEFAULT_OUTPUT_RESERVE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    InferType,
    ExtractBinary,
    ExtractContinuous,
}

impl Task {
    pub fn extraction(shape: FindingShape) -> Task {
        match shape {
            FindingShape::Binary => Task::ExtractBinary,
            FindingShape::Continuous => Task::ExtractContinuous,
        }
    }

    fn template(self) -> &'static str {
        match self {
            Task::InferType => INFER_TYPE,
            Task::ExtractBinary => EXTRACT_BINARY,
            Task::ExtractContinuous => EXTRACT_CONTINUOUS,
        }
    }
}

/// Replaces `{name}` placeholders in one pass, so substituted text is never
/// itself scanned for placeholders.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (*v, close))
        });
        match replaced {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Outcome-type prompt. Only the outcome description goes in; no article text.
pub fn render_type_prompt(outcome: &str) -> String {
    fill(INFER_TYPE, &[("outcome", outcome)])
}

pub fn render_extraction_prompt(shape: FindingShape, ico: &IcoRecord, article: &str) -> String {
    fill(
        Task::extraction(shape).template(),
        &[
            ("article", article),
            ("intervention", &ico.intervention),
            ("comparator", &ico.comparator),
            ("outcome", &ico.outcome),
        ],
    )
}

/// Instantiates the template for `task`. A chunk must be given for the
/// extraction tasks and must not be given for type inference.
pub fn render_prompt(task: Task, ico: &IcoRecord, chunk: Option<&Chunk>) -> Result<String, ExtractionError> {
    match (task, chunk) {
        (Task::InferType, None) => Ok(render_type_prompt(&ico.outcome)),
        (Task::ExtractBinary, Some(c)) => Ok(render_extraction_prompt(FindingShape::Binary, ico, &c.text)),
        (Task::ExtractContinuous, Some(c)) => Ok(render_extraction_prompt(FindingShape::Continuous, ico, &c.text)),
        (Task::InferType, Some(_)) => Err(ExtractionError::Contract(
            "type inference takes no document text".into(),
        )),
        (_, None) => Err(ExtractionError::Contract("extraction prompts need a chunk".into())),
    }
}

/// Tokens an extraction prompt costs before any article text is added;
/// the larger of the two extraction templates.
pub fn scaffold_tokens(ico: &IcoRecord, tokenizer: &dyn Tokenizer) -> usize {
    [FindingShape::Binary, FindingShape::Continuous]
        .into_iter()
        .map(|s| tokenizer.count(&render_extraction_prompt(s, ico, "")))
        .max()
        .unwrap_or(0)
}

/// Chunk budget: context window minus prompt scaffold minus output reserve.
pub fn chunk_token_limit(max_context_tokens: usize, scaffold: usize, reserve: usize) -> Result<usize, ExtractionError> {
    max_context_tokens
        .checked_sub(scaffold + reserve)
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            ExtractionError::Config(format!(
                "context of {max_context_tokens} tokens leaves no room after a {scaffold}-token prompt and {reserve}-token reserve"
            ))
        })
}
