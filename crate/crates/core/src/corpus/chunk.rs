use serde::{Deserialize, Serialize};

use super::tokenize::Tokenizer;
use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub document_id: String,
    pub index: usize,
    pub text: String,
    pub token_count: usize,
    /// Set when a single segment was longer than the limit and had to be cut
    /// at a token boundary.
    #[serde(default)]
    pub hard_split: bool,
}

/// Splits markdown into segments: every table row is one segment, other
/// lines are split into sentences.
///
/// A sentence ends at `.`, `!` or `?` followed by whitespace and then an
/// uppercase letter or a digit.
pub fn segments(markdown: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for line in markdown.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('|') {
            out.push(trimmed);
            continue;
        }
        out.extend(sentences(trimmed));
    }
    out
}

fn sentences(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j > i + 1 && j < chars.len() && (chars[j].1.is_uppercase() || chars[j].1.is_ascii_digit()) {
                let end = pos + c.len_utf8();
                out.push(line[start..end].trim());
                start = chars[j].0;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    let rest = line[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

fn has_digit(s: &str) -> bool {
    s.bytes().any(|b| b.is_ascii_digit())
}

/// Keeps only digit-bearing segments and packs them greedily, in order, into
/// chunks of at most `token_limit` tokens. Segments inside a chunk are joined
/// by newlines.
pub fn chunk_document(
    document_id: &str,
    markdown: &str,
    token_limit: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Chunk>, CorpusError> {
    if token_limit == 0 {
        return Err(CorpusError::InvalidTokenLimit);
    }
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut current = String::new();
    let mut current_tokens = 0;

    let emit = |text: String, token_count: usize, hard_split: bool, chunks: &mut Vec<Chunk>| {
        chunks.push(Chunk {
            document_id: document_id.to_string(),
            index: chunks.len(),
            text,
            token_count,
            hard_split,
        });
    };

    for segment in segments(markdown).into_iter().filter(|s| has_digit(s)) {
        if !current.is_empty() {
            let candidate = format!("{current}\n{segment}");
            let n = tokenizer.count(&candidate);
            if n <= token_limit {
                current = candidate;
                current_tokens = n;
                continue;
            }
            emit(std::mem::take(&mut current), current_tokens, false, &mut chunks);
        }
        let n = tokenizer.count(segment);
        if n <= token_limit {
            current = segment.to_string();
            current_tokens = n;
            continue;
        }
        for piece in hard_split(segment, token_limit, tokenizer) {
            let n = tokenizer.count(piece);
            emit(piece.to_string(), n, true, &mut chunks);
        }
    }
    if !current.is_empty() {
        emit(current, current_tokens, false, &mut chunks);
    }
    Ok(chunks)
}

fn hard_split<'a>(segment: &'a str, token_limit: usize, tokenizer: &dyn Tokenizer) -> Vec<&'a str> {
    let spans = tokenizer.token_spans(segment);
    spans
        .chunks(token_limit)
        .enumerate()
        .map(|(k, group)| {
            let start = group[0].start;
            let end = spans
                .get((k + 1) * token_limit)
                .map(|s| s.start)
                .unwrap_or(segment.len());
            segment[start..end].trim_end()
        })
        .collect()
}
