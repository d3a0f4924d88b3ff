use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::Context;
use rctmeta::corpus::{load_annotations, HeuristicTokenizer, TrialDocument};
use serde::Serialize;

use crate::error::{CliError, Classify, ExitKind};
use crate::io::{create_dir, dataset_path, to_json, write_file};
use crate::{DatasetArgs, IngestArgs};

#[derive(Debug, Serialize)]
struct ManifestRow {
    id: String,
    source: String,
    token_count: usize,
}

fn source_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, CliError> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .or_exit(ExitKind::Config)?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("xml") || e.eq_ignore_ascii_case("md"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn convert(path: &Path, tokenizer: &HeuristicTokenizer) -> anyhow::Result<TrialDocument> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .context("file name is not valid UTF-8")?;
    let text = fs::read_to_string(path)?;
    let is_xml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml"));
    Ok(if is_xml {
        TrialDocument::from_article_xml(id, &text, tokenizer)?
    } else {
        TrialDocument::from_markdown(id, &text, tokenizer)
    })
}

/// Writes `<out>/documents/<id>.md` per source file and a manifest of token
/// counts. Every unreadable file is reported, and with `--dataset` every
/// referenced document that has no source file.
pub fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let tokenizer = HeuristicTokenizer::default();
    let out = args.out.join("documents");
    create_dir(&out)?;

    let mut manifest = Vec::new();
    let mut failures = Vec::new();
    let mut seen = BTreeSet::new();
    for path in source_files(&args.docs)? {
        let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match convert(&path, &tokenizer) {
            Ok(doc) if seen.insert(doc.id.clone()) => {
                write_file(&out.join(format!("{}.md", doc.id)), &doc.markdown)?;
                manifest.push(ManifestRow {
                    id: doc.id,
                    source,
                    token_count: doc.token_count,
                });
            }
            Ok(doc) => failures.push(format!("{source}: duplicate document id {}", doc.id)),
            Err(e) => failures.push(format!("{source}: {e:#}")),
        }
    }
    write_file(&out.join("manifest.json"), &to_json(&manifest)?)?;

    if let Some(dataset) = &args.dataset {
        let path = dataset_path(&DatasetArgs {
            dataset: dataset.clone(),
            split: args.split,
        })?;
        let records = load_annotations(&path).or_exit(ExitKind::Data)?;
        let missing: BTreeSet<&str> = records
            .iter()
            .map(|r| r.document_id.as_str())
            .filter(|id| !seen.contains(*id))
            .collect();
        for id in missing {
            failures.push(format!("{id}: no source file"));
        }
    }

    if !failures.is_empty() {
        return Err(CliError::data(format!("ingest failed for:\n  {}", failures.join("\n  "))));
    }
    println!("ingested {} documents into {}", manifest.len(), out.display());
    Ok(())
}
