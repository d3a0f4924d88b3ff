//! Zero-shot extraction: outcome-type inference, conditional numerical
//! extraction over chunks, output parsing and chunk merging.

mod client;
mod merge;
mod parse;
mod pipeline;
mod prompt;
mod types;

pub use client::{
    cache_key, completions_url, Backoff, CachedClient, ChatClient, ChatMessage, ChatRequest, ClientError,
    HttpTransport, ModelConfig, OpenAiClient, ReplayClient, ResponseCache, SendFailure, Transport,
};
pub use merge::{merge_chunk_findings, MergeConflict, MergedFinding};
pub use parse::{parse_finding, parse_outcome_type, ParsedFinding, ParsedType};
pub use pipeline::{document_chunks, run_record, run_record_independent, CallRecord, ExtractionTrace};
pub use prompt::{
    chunk_token_limit, render_extraction_prompt, render_prompt, render_type_prompt, scaffold_tokens, Task,
    DEFAULT_OUTPUT_RESERVE, PROMPT_VERSION,
};
pub use types::{
    BinaryFinding, ContinuousFinding, Finding, FindingShape, InvalidNumber, MaybeNumber, OutcomeType,
    BINARY_FIELDS, CONTINUOUS_FIELDS, UNKNOWN_TOKEN,
};

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: ClientError,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}
