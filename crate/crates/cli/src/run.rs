use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use anyhow::Context;
use rctmeta::corpus::{load_documents, HeuristicTokenizer, IcoRecord, TrialDocument};
use rctmeta::extraction::{
    document_chunks, run_record, run_record_independent, CachedClient, ChatClient, ClientError, ExtractionError,
    ExtractionTrace, ModelConfig, OpenAiClient, ReplayClient, ResponseCache, BINARY_FIELDS, CONTINUOUS_FIELDS,
    DEFAULT_OUTPUT_RESERVE,
};
use serde::Serialize;

use crate::error::{CliError, Classify, ExitKind};
use crate::io::{complete_prefix_len, create_dir, load_records, read_traces, TRACES_FILE};
use crate::{ExtractType, Mode, RunArgs};

pub const FAILURES_FILE: &str = "failures.jsonl";
pub const FINDINGS_FILE: &str = "findings.csv";

#[derive(Debug, Serialize)]
struct Failure {
    record_id: String,
    kind: &'static str,
    error: String,
}

fn exit_kind(e: &ExtractionError) -> ExitKind {
    match e {
        ExtractionError::Record { source, .. } => match source {
            ClientError::Transport { .. } | ClientError::ReplayMiss { .. } => ExitKind::Transport,
            ClientError::Config(_) => ExitKind::Config,
            ClientError::Cache { .. } => ExitKind::Data,
        },
        ExtractionError::Config(_) => ExitKind::Config,
        ExtractionError::Contract(_) | ExtractionError::Corpus(_) => ExitKind::Data,
    }
}

fn kind_name(kind: ExitKind) -> &'static str {
    match kind {
        ExitKind::Config => "config",
        ExitKind::Data => "data",
        ExitKind::Transport => "transport",
    }
}

fn make_client(args: &RunArgs) -> Result<Box<dyn ChatClient>, CliError> {
    match args.mode {
        Mode::Replay => {
            let dir = args
                .cache_dir
                .as_ref()
                .ok_or_else(|| CliError::config("replay mode needs --cache-dir"))?;
            let cache = ResponseCache::open_existing(dir).or_exit(ExitKind::Config)?;
            Ok(Box::new(ReplayClient::new(&args.model, cache)))
        }
        Mode::Live => {
            let mut config = ModelConfig::new(&args.model, &args.endpoint, args.max_context_tokens);
            config.api_key_env = args.api_key_env.clone();
            config.max_retries = args.max_retries;
            config.request_timeout = Duration::from_secs(args.timeout);
            config.validate().or_exit(ExitKind::Config)?;
            let client = OpenAiClient::from_config(config).or_exit(ExitKind::Config)?;
            let dir = args.cache_dir.clone().unwrap_or_else(|| args.out.join("cache"));
            let cache = ResponseCache::open(dir).or_exit(ExitKind::Config)?;
            Ok(Box::new(CachedClient::new(client, cache)))
        }
    }
}

/// Traces already on disk, after dropping an interrupted final line.
fn existing_traces(path: &Path, model: &str) -> Result<Vec<ExtractionTrace>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let keep = complete_prefix_len(path)?;
    let file = OpenOptions::new().write(true).open(path).or_exit(ExitKind::Data)?;
    if file.metadata().or_exit(ExitKind::Data)?.len() != keep {
        file.set_len(keep).or_exit(ExitKind::Data)?;
    }
    let traces = read_traces(path)?;
    if let Some(t) = traces.iter().find(|t| t.model_name != model) {
        return Err(CliError::config(format!(
            "{} holds traces from model `{}`; use a separate --out per model",
            path.display(),
            t.model_name
        )));
    }
    Ok(traces)
}

fn extract_one(
    client: &dyn ChatClient,
    record: &IcoRecord,
    doc: &TrialDocument,
    args: &RunArgs,
    tokenizer: &HeuristicTokenizer,
) -> Result<ExtractionTrace, ExtractionError> {
    let chunks = document_chunks(
        record,
        &doc.markdown,
        args.max_context_tokens,
        DEFAULT_OUTPUT_RESERVE,
        tokenizer,
    )?;
    match args.extract_type {
        ExtractType::Inferred => run_record(client, record, &chunks, None),
        ExtractType::Reference => run_record_independent(client, record, &chunks),
    }
}

/// Runs `pending` on a bounded worker pool and hands results to `sink` in
/// input order. Stops handing out work once `sink` fails.
fn run_pool<T: Sync, R: Send>(
    pending: &[T],
    concurrency: usize,
    work: impl Fn(&T) -> R + Sync,
    mut sink: impl FnMut(R) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, R)>();
    thread::scope(|s| {
        for _ in 0..concurrency.min(pending.len()) {
            let tx = tx.clone();
            let (next, stop, work) = (&next, &stop, &work);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= pending.len() || stop.load(Ordering::SeqCst) {
                    break;
                }
                if tx.send((i, work(&pending[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffer = BTreeMap::new();
        let mut expected = 0;
        for (i, result) in rx {
            buffer.insert(i, result);
            while let Some(result) = buffer.remove(&expected) {
                expected += 1;
                if let Err(e) = sink(result) {
                    stop.store(true, Ordering::SeqCst);
                    return Err(e);
                }
            }
        }
        Ok(())
    })
}

fn findings_csv(path: &Path, traces: &[&ExtractionTrace]) -> Result<(), CliError> {
    let mut fields: Vec<&str> = Vec::new();
    for f in BINARY_FIELDS.iter().chain(CONTINUOUS_FIELDS.iter()) {
        if !fields.contains(f) {
            fields.push(f);
        }
    }
    let write = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["record_id", "predicted_type", "extraction_type", "shape"];
        header.extend(&fields);
        header.extend(["format_errors", "conflicts"]);
        w.write_record(&header)?;
        for t in traces {
            let mut row = vec![
                t.record_id.clone(),
                t.predicted_type.map(|p| p.to_string()).unwrap_or_default(),
                t.extraction_type.to_string(),
                t.finding.map(|f| f.shape().to_string()).unwrap_or_default(),
            ];
            let values: HashMap<&str, String> = t
                .finding
                .map(|f| {
                    f.shape()
                        .field_names()
                        .iter()
                        .copied()
                        .zip(f.values().iter().map(ToString::to_string))
                        .collect()
                })
                .unwrap_or_default();
            row.extend(fields.iter().map(|f| values.get(f).cloned().unwrap_or_default()));
            row.push(t.format_error_count.to_string());
            row.push(t.conflicts.len().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    write()
        .with_context(|| format!("writing {}", path.display()))
        .or_exit(ExitKind::Data)
}

/// Extracts every record without a trace in `<out>/traces.jsonl`, appending
/// new traces in dataset order. Failed records go to `failures.jsonl` and
/// are retried on the next run.
pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    if args.concurrency == 0 {
        return Err(CliError::config("--concurrency must be at least 1"));
    }
    let records = load_records(&args.dataset)?;
    let tokenizer = HeuristicTokenizer::default();
    let docs = load_documents(&args.docs, &tokenizer).or_exit(ExitKind::Data)?;
    let missing: BTreeSet<&str> = records
        .iter()
        .map(|r| r.document_id.as_str())
        .filter(|id| !docs.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "no document in {} for: {}",
            args.docs.display(),
            missing.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    create_dir(&args.out)?;
    let client = make_client(args)?;
    let traces_path = args.out.join(TRACES_FILE);
    let mut traces = existing_traces(&traces_path, &args.model)?;
    let done: HashSet<String> = traces.iter().map(|t| t.record_id.clone()).collect();
    let pending: Vec<&IcoRecord> = records.iter().filter(|r| !done.contains(&r.id)).collect();
    tracing::info!(pending = pending.len(), done = done.len(), "starting run");

    let mut out = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&traces_path)
        .with_context(|| format!("opening {}", traces_path.display()))
        .or_exit(ExitKind::Data)?;
    let mut failures = Vec::new();
    let mut written = 0;
    run_pool(
        &pending,
        args.concurrency,
        |record| {
            let result = extract_one(client.as_ref(), record, &docs[&record.document_id], args, &tokenizer);
            (record.id.clone(), result)
        },
        |(id, result)| {
            match result {
                Ok(trace) => {
                    let mut line = serde_json::to_string(&trace).or_exit(ExitKind::Data)?;
                    line.push('\n');
                    out.write_all(line.as_bytes())
                        .and_then(|()| out.flush())
                        .with_context(|| format!("writing {}", traces_path.display()))
                        .or_exit(ExitKind::Data)?;
                    traces.push(trace);
                    written += 1;
                }
                Err(e) => {
                    tracing::warn!(record = %id, error = %e, "record failed");
                    failures.push((exit_kind(&e), Failure {
                        record_id: id,
                        kind: kind_name(exit_kind(&e)),
                        error: e.to_string(),
                    }));
                }
            }
            Ok(())
        },
    )?;

    let failures_path = args.out.join(FAILURES_FILE);
    let mut lines = String::new();
    for (_, f) in &failures {
        lines.push_str(&serde_json::to_string(f).or_exit(ExitKind::Data)?);
        lines.push('\n');
    }
    fs::write(&failures_path, lines)
        .with_context(|| format!("writing {}", failures_path.display()))
        .or_exit(ExitKind::Data)?;

    let by_id: HashMap<&str, &ExtractionTrace> = traces.iter().map(|t| (t.record_id.as_str(), t)).collect();
    let ordered: Vec<&ExtractionTrace> = records.iter().filter_map(|r| by_id.get(r.id.as_str()).copied()).collect();
    findings_csv(&args.out.join(FINDINGS_FILE), &ordered)?;

    println!(
        "{written} new traces, {} already present, {} failed",
        done.len(),
        failures.len()
    );
    match failures.iter().map(|(k, _)| *k).min_by_key(|k| k.code()) {
        None => Ok(()),
        Some(kind) => Err(CliError::new(
            kind,
            anyhow::anyhow!(
                "{} of {} records failed; see {}",
                failures.len(),
                pending.len(),
                failures_path.display()
            ),
        )),
    }
}
