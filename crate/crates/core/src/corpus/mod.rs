//! Trial reports and reference annotations: loading, XML preprocessing,
//! markdown conversion, number normalization and token-budget chunking.

mod chunk;
mod dataset;
mod document;
mod normalize;
mod tokenize;
mod xml;

use std::path::PathBuf;

pub use chunk::{chunk_document, segments, Chunk};
pub use dataset::{load_annotations, write_annotations, IcoRecord, DATASET_COLUMNS};
pub use document::{extract_sections, load_documents, TrialDocument};
pub use normalize::normalize_numbers;
pub use tokenize::{count_tokens, HeuristicTokenizer, Tokenizer};
pub use xml::{preprocess_xml, xml_to_markdown, PRESENTATIONAL_ATTRIBUTES};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed XML at {line}:{column}: {message}")]
    Xml { line: u32, column: u32, message: String },
    #[error("token limit must be positive")]
    InvalidTokenLimit,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}, field `{field}`: {message}")]
    Row {
        row: usize,
        field: String,
        message: String,
    },
    #[error("row {row}: unknown outcome type label `{label}`")]
    UnknownOutcomeType { row: usize, label: String },
    #[error("{path}: unsupported dataset format (expected .csv or .jsonl)")]
    UnsupportedFormat { path: PathBuf },
    #[error("{path}: {message}")]
    Document { path: PathBuf, message: String },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}
