//! Shared file handling for the commands.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rctmeta::corpus::{load_annotations, IcoRecord};
use rctmeta::extraction::ExtractionTrace;

use crate::error::{CliError, Classify, ExitKind};
use crate::DatasetArgs;

pub const TRACES_FILE: &str = "traces.jsonl";

/// The annotation file named by `--dataset`, picking the split inside a directory.
pub fn dataset_path(args: &DatasetArgs) -> Result<PathBuf, CliError> {
    let path = &args.dataset;
    if !path.is_dir() {
        if !path.exists() {
            return Err(CliError::config(format!("dataset {} does not exist", path.display())));
        }
        return Ok(path.clone());
    }
    ["csv", "jsonl"]
        .iter()
        .map(|ext| path.join(format!("{}.{ext}", args.split.name())))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            CliError::config(format!(
                "{} holds neither {split}.csv nor {split}.jsonl",
                path.display(),
                split = args.split.name()
            ))
        })
}

pub fn load_records(args: &DatasetArgs) -> Result<Vec<IcoRecord>, CliError> {
    let path = dataset_path(args)?;
    load_annotations(&path).or_exit(ExitKind::Data)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .or_exit(ExitKind::Config)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .or_exit(ExitKind::Data)
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).or_exit(ExitKind::Data)?;
    s.push('\n');
    Ok(s)
}

/// Complete trace rows of a traces file. A trailing line without a newline
/// is an interrupted write and is ignored; any other unreadable line is an
/// error.
pub fn read_traces(path: &Path) -> Result<Vec<ExtractionTrace>, CliError> {
    let file = fs::File::open(path)
        .with_context(|| format!("reading {}", path.display()))
        .or_exit(ExitKind::Data)?;
    let mut reader = BufReader::new(file);
    let mut traces = Vec::new();
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let read = reader
            .read_line(&mut line)
            .with_context(|| format!("reading {}", path.display()))
            .or_exit(ExitKind::Data)?;
        if read == 0 || !line.ends_with('\n') {
            break;
        }
        number += 1;
        if line.trim().is_empty() {
            continue;
        }
        let trace = serde_json::from_str(&line)
            .with_context(|| format!("{} line {number}", path.display()))
            .or_exit(ExitKind::Data)?;
        traces.push(trace);
    }
    Ok(traces)
}

/// Length of the complete-line prefix of a file.
pub fn complete_prefix_len(path: &Path) -> Result<u64, CliError> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .or_exit(ExitKind::Data)?;
    Ok(bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i as u64 + 1))
}
