//! One ICO record through the model: type inference, per-chunk extraction,
//! parsing and merging, with every raw response kept in the trace.

use serde::{Deserialize, Serialize};

use super::client::{cache_key, ChatClient};
use super::merge::{merge_chunk_findings, MergeConflict};
use super::parse::{parse_finding, parse_outcome_type, ParsedFinding, ParsedType};
use super::prompt::{chunk_token_limit, render_prompt, scaffold_tokens, Task, PROMPT_VERSION};
use super::types::{Finding, FindingShape, OutcomeType};
use super::ExtractionError;
use crate::corpus::{chunk_document, normalize_numbers, Chunk, IcoRecord, Tokenizer};

/// One model call as issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_index: Option<usize>,
    /// Replay-cache key of the prompt.
    pub prompt_hash: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionTrace {
    pub record_id: String,
    pub model_name: String,
    pub prompt_version: String,
    /// Model's answer to the type question; `None` when it was not asked.
    pub predicted_type: Option<OutcomeType>,
    #[serde(default)]
    pub type_format_error: bool,
    /// Type that chose the extraction prompt.
    pub extraction_type: OutcomeType,
    pub calls: Vec<CallRecord>,
    pub chunk_findings: Vec<ParsedFinding>,
    /// Merged result; `None` when extraction was skipped, which stands for
    /// an all-unknown finding of any shape.
    pub finding: Option<Finding>,
    pub conflicts: Vec<MergeConflict>,
    pub format_error_count: usize,
}

impl ExtractionTrace {
    /// The merged finding read as `shape`; a missing or differently shaped
    /// finding is all-unknown.
    pub fn finding_as(&self, shape: FindingShape) -> Finding {
        match self.finding {
            Some(f) if f.shape() == shape => f,
            _ => Finding::unknown(shape),
        }
    }

    pub fn extraction_calls(&self) -> usize {
        self.calls.iter().filter(|c| c.task != Task::InferType).count()
    }
}

/// Normalizes number words in the document and chunks it for `ico` under a
/// model context of `max_context_tokens`. A document with no digit-bearing
/// text yields one empty chunk so the record is still asked.
pub fn document_chunks(
    ico: &IcoRecord,
    markdown: &str,
    max_context_tokens: usize,
    reserve: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, ExtractionError> {
    let limit = chunk_token_limit(max_context_tokens, scaffold_tokens(ico, tokenizer), reserve)?;
    let mut chunks = chunk_document(&ico.document_id, &normalize_numbers(markdown), limit, tokenizer)?;
    if chunks.is_empty() {
        chunks.push(Chunk {
            document_id: ico.document_id.clone(),
            index: 0,
            text: String::new(),
            token_count: 0,
            hard_split: false,
        });
    }
    Ok(chunks)
}

fn call(
    client: &dyn ChatClient,
    ico: &IcoRecord,
    task: Task,
    chunk: Option<&Chunk>,
) -> Result<CallRecord, ExtractionError> {
    let prompt = render_prompt(task, ico, chunk)?;
    let response = client.complete(&prompt).map_err(|source| ExtractionError::Record {
        id: ico.id.clone(),
        source,
    })?;
    Ok(CallRecord {
        task,
        chunk_index: chunk.map(|c| c.index),
        prompt_hash: cache_key(client.model_name(), &prompt),
        response,
    })
}

fn infer(client: &dyn ChatClient, ico: &IcoRecord) -> Result<(ParsedType, CallRecord), ExtractionError> {
    let record = call(client, ico, Task::InferType, None)?;
    Ok((parse_outcome_type(&record.response), record))
}

fn extract(
    client: &dyn ChatClient,
    ico: &IcoRecord,
    chunks: &[Chunk],
    extraction_type: OutcomeType,
    mut trace: ExtractionTrace,
) -> Result<ExtractionTrace, ExtractionError> {
    trace.extraction_type = extraction_type;
    let Some(shape) = FindingShape::from_outcome_type(extraction_type) else {
        return Ok(trace);
    };
    let task = Task::extraction(shape);
    for chunk in chunks {
        let record = call(client, ico, task, Some(chunk))?;
        let parsed = parse_finding(&record.response, shape);
        trace.format_error_count += parsed.format_error as usize;
        trace.chunk_findings.push(parsed);
        trace.calls.push(record);
    }
    let findings: Vec<Finding> = trace.chunk_findings.iter().map(|p| p.finding).collect();
    let merged = merge_chunk_findings(&findings)?;
    trace.finding = Some(merged.finding);
    trace.conflicts = merged.conflicts;
    Ok(trace)
}

fn empty_trace(client: &dyn ChatClient, ico: &IcoRecord) -> ExtractionTrace {
    ExtractionTrace {
        record_id: ico.id.clone(),
        model_name: client.model_name().to_string(),
        prompt_version: PROMPT_VERSION.to_string(),
        predicted_type: None,
        type_format_error: false,
        extraction_type: OutcomeType::Unknown,
        calls: Vec::new(),
        chunk_findings: Vec::new(),
        finding: None,
        conflicts: Vec::new(),
        format_error_count: 0,
    }
}

fn check_chunks(chunks: &[Chunk]) -> Result<(), ExtractionError> {
    if chunks.is_empty() {
        return Err(ExtractionError::Contract("record has no chunks".into()));
    }
    Ok(())
}

/// Infers the outcome type (unless `type_override` is given) and extracts
/// with the matching prompt over every chunk. An unknown type skips
/// extraction.
pub fn run_record(
    client: &dyn ChatClient,
    ico: &IcoRecord,
    chunks: &[Chunk],
    type_override: Option<OutcomeType>,
) -> Result<ExtractionTrace, ExtractionError> {
    check_chunks(chunks)?;
    let mut trace = empty_trace(client, ico);
    let extraction_type = match type_override {
        Some(t) => t,
        None => {
            let (parsed, record) = infer(client, ico)?;
            trace.predicted_type = Some(parsed.outcome_type);
            trace.type_format_error = parsed.format_error;
            trace.calls.push(record);
            parsed.outcome_type
        }
    };
    extract(client, ico, chunks, extraction_type, trace)
}

/// Scores the two tasks separately: the type is inferred and recorded, but
/// extraction uses the reference type so extraction quality is not masked
/// by type mistakes.
pub fn run_record_independent(
    client: &dyn ChatClient,
    ico: &IcoRecord,
    chunks: &[Chunk],
) -> Result<ExtractionTrace, ExtractionError> {
    check_chunks(chunks)?;
    let mut trace = empty_trace(client, ico);
    let (parsed, record) = infer(client, ico)?;
    trace.predicted_type = Some(parsed.outcome_type);
    trace.type_format_error = parsed.format_error;
    trace.calls.push(record);
    extract(client, ico, chunks, ico.reference_type, trace)
}
