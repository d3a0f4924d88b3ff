//! Shared helpers: running the binary and building replay caches.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rctmeta::corpus::{load_annotations, load_documents, Chunk, HeuristicTokenizer, IcoRecord};
use rctmeta::extraction::{
    document_chunks, render_prompt, FindingShape, ResponseCache, Task, DEFAULT_OUTPUT_RESERVE,
};

pub const MODEL: &str = "fixture-model";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn rctmeta<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rctmeta"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// What a fixture model says for one prompt; `None` leaves it uncached.
pub type Responder = fn(&IcoRecord, Task, Option<&Chunk>) -> Option<String>;

/// Answers with the reference annotation.
pub fn echo(record: &IcoRecord, task: Task, _chunk: Option<&Chunk>) -> Option<String> {
    if task == Task::InferType {
        return Some(record.reference_type.to_string());
    }
    let finding = record.reference.filter(|f| Task::extraction(f.shape()) == task)?;
    Some(
        finding
            .shape()
            .field_names()
            .iter()
            .zip(finding.values())
            .map(|(name, v)| format!("{name}: {v}\n"))
            .collect(),
    )
}

/// Abstains from everything.
pub fn always_x(_record: &IcoRecord, _task: Task, _chunk: Option<&Chunk>) -> Option<String> {
    Some("x".to_string())
}

/// Fills `cache` with `responder`'s answer to every prompt a run over
/// `dataset` and `docs` can issue, for both extraction shapes.
pub fn build_cache(cache: &Path, dataset: &Path, docs: &Path, max_context_tokens: usize, responder: Responder) {
    let tokenizer = HeuristicTokenizer::default();
    let records = load_annotations(dataset).unwrap();
    let documents = load_documents(docs, &tokenizer).unwrap();
    let cache = ResponseCache::open(cache).unwrap();
    let put = |prompt: String, answer: Option<String>| {
        if let Some(answer) = answer {
            cache.put(MODEL, &prompt, &answer).unwrap();
        }
    };
    for record in &records {
        put(
            render_prompt(Task::InferType, record, None).unwrap(),
            responder(record, Task::InferType, None),
        );
        let doc = &documents[&record.document_id];
        let chunks = document_chunks(record, &doc.markdown, max_context_tokens, DEFAULT_OUTPUT_RESERVE, &tokenizer).unwrap();
        for shape in [FindingShape::Binary, FindingShape::Continuous] {
            let task = Task::extraction(shape);
            for chunk in &chunks {
                put(render_prompt(task, record, Some(chunk)).unwrap(), responder(record, task, Some(chunk)));
            }
        }
    }
}

/// Ingests `docs` into `out/documents` and returns that directory.
pub fn ingest(docs: &Path, out: &Path) -> PathBuf {
    let o = rctmeta(&["ingest".as_ref(), "--docs".as_ref(), docs.as_os_str(), "--out".as_ref(), out.as_os_str()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("documents")
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
