//! Reference annotation files (CSV or JSON lines).

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::extraction::{BinaryFinding, ContinuousFinding, Finding, MaybeNumber, OutcomeType};

/// Column order used when writing datasets.
pub const DATASET_COLUMNS: [&str; 14] = [
    "pmcid",
    "intervention",
    "comparator",
    "outcome",
    "outcome_type",
    "intervention_events",
    "intervention_group_size",
    "comparator_events",
    "comparator_group_size",
    "intervention_mean",
    "intervention_sd",
    "comparator_mean",
    "comparator_sd",
    "is_data_in_figure_or_table",
];

/// One intervention/comparator/outcome question about one trial report,
/// with its reference answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcoRecord {
    /// `<pmcid>:<n>` where `n` counts rows of that document in file order.
    pub id: String,
    pub document_id: String,
    pub intervention: String,
    pub comparator: String,
    pub outcome: String,
    pub reference_type: OutcomeType,
    /// Present iff `reference_type` is known, with the matching shape.
    pub reference: Option<Finding>,
    pub in_table_or_figure: bool,
    pub has_complete_reference: bool,
}

impl IcoRecord {
    pub fn reference_binary(&self) -> Option<&BinaryFinding> {
        match &self.reference {
            Some(Finding::Binary(b)) => Some(b),
            _ => None,
        }
    }

    pub fn reference_continuous(&self) -> Option<&ContinuousFinding> {
        match &self.reference {
            Some(Finding::Continuous(c)) => Some(c),
            _ => None,
        }
    }
}

type RawRow = HashMap<String, String>;

fn cell<'a>(row: &'a RawRow, key: &str) -> &'a str {
    row.get(key).map(String::as_str).unwrap_or("").trim()
}

fn number(row: &RawRow, key: &str, line: usize) -> Result<MaybeNumber, CorpusError> {
    cell(row, key).parse().map_err(|e: crate::extraction::InvalidNumber| CorpusError::Row {
        row: line,
        field: key.to_string(),
        message: e.to_string(),
    })
}

fn flag(row: &RawRow, key: &str, line: usize) -> Result<bool, CorpusError> {
    match cell(row, key).to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" | "" => Ok(false),
        other => Err(CorpusError::Row {
            row: line,
            field: key.to_string(),
            message: format!("expected true or false, got `{other}`"),
        }),
    }
}

fn check_count(value: MaybeNumber, key: &str, line: usize, positive: bool) -> Result<(), CorpusError> {
    if let MaybeNumber::Known(v) = value {
        let ok = value.is_count() && (!positive || v > 0.0);
        if !ok {
            let what = if positive { "a positive whole number" } else { "a non-negative whole number" };
            return Err(CorpusError::Row {
                row: line,
                field: key.to_string(),
                message: format!("expected {what}, got {v}"),
            });
        }
    }
    Ok(())
}

fn events_within(events: MaybeNumber, size: MaybeNumber, key: &str, line: usize) -> Result<(), CorpusError> {
    if let (Some(e), Some(n)) = (events.value(), size.value()) {
        if e > n {
            return Err(CorpusError::Row {
                row: line,
                field: key.to_string(),
                message: format!("{e} events exceed group size {n}"),
            });
        }
    }
    Ok(())
}

fn record_from_row(row: &RawRow, line: usize, ordinal: usize) -> Result<IcoRecord, CorpusError> {
    let document_id = cell(row, "pmcid").to_string();
    if document_id.is_empty() {
        return Err(CorpusError::Row {
            row: line,
            field: "pmcid".into(),
            message: "missing document id".into(),
        });
    }
    let label = cell(row, "outcome_type");
    let reference_type = OutcomeType::from_label(label).ok_or_else(|| CorpusError::UnknownOutcomeType {
        row: line,
        label: label.to_string(),
    })?;

    let igs = number(row, "intervention_group_size", line)?;
    let cgs = number(row, "comparator_group_size", line)?;
    let reference = match reference_type {
        OutcomeType::Binary => {
            let ie = number(row, "intervention_events", line)?;
            let ce = number(row, "comparator_events", line)?;
            check_count(ie, "intervention_events", line, false)?;
            check_count(ce, "comparator_events", line, false)?;
            check_count(igs, "intervention_group_size", line, true)?;
            check_count(cgs, "comparator_group_size", line, true)?;
            events_within(ie, igs, "intervention_events", line)?;
            events_within(ce, cgs, "comparator_events", line)?;
            Some(Finding::Binary(BinaryFinding::new(ie, igs, ce, cgs)))
        }
        OutcomeType::Continuous => {
            check_count(igs, "intervention_group_size", line, true)?;
            check_count(cgs, "comparator_group_size", line, true)?;
            let finding = ContinuousFinding {
                intervention_mean: number(row, "intervention_mean", line)?,
                intervention_sd: number(row, "intervention_sd", line)?,
                intervention_group_size: igs,
                comparator_mean: number(row, "comparator_mean", line)?,
                comparator_sd: number(row, "comparator_sd", line)?,
                comparator_group_size: cgs,
            };
            for (key, sd) in [
                ("intervention_sd", finding.intervention_sd),
                ("comparator_sd", finding.comparator_sd),
            ] {
                if sd.value().is_some_and(|v| v < 0.0) {
                    return Err(CorpusError::Row {
                        row: line,
                        field: key.into(),
                        message: "standard deviation must be non-negative".into(),
                    });
                }
            }
            Some(Finding::Continuous(finding))
        }
        OutcomeType::Unknown => None,
    };
    let has_complete_reference = reference
        .as_ref()
        .is_some_and(|f| f.values().iter().all(|v| v.is_known()));

    Ok(IcoRecord {
        id: format!("{document_id}:{ordinal}"),
        document_id,
        intervention: cell(row, "intervention").to_string(),
        comparator: cell(row, "comparator").to_string(),
        outcome: cell(row, "outcome").to_string(),
        reference_type,
        reference,
        in_table_or_figure: flag(row, "is_data_in_figure_or_table", line)?,
        has_complete_reference,
    })
}

enum Format {
    Csv,
    JsonLines,
}

fn format_of(path: &Path) -> Result<Format, CorpusError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => Ok(Format::Csv),
        Some("jsonl") | Some("json") | Some("ndjson") => Ok(Format::JsonLines),
        _ => Err(CorpusError::UnsupportedFormat { path: path.to_path_buf() }),
    }
}

/// Reads raw rows as `(line number, row)`.
fn read_rows(path: &Path) -> Result<Vec<(usize, RawRow)>, CorpusError> {
    let io = |e| CorpusError::io(path, e);
    match format_of(path)? {
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(false)
                .from_path(path)
                .map_err(|e| csv_error(path, e))?;
            let headers: Vec<String> = reader
                .headers()
                .map_err(|e| csv_error(path, e))?
                .iter()
                .map(|h| h.trim().to_ascii_lowercase())
                .collect();
            let mut rows = Vec::new();
            for (i, result) in reader.records().enumerate() {
                let line = i + 2;
                let record = result.map_err(|e| CorpusError::Row {
                    row: line,
                    field: "*".into(),
                    message: e.to_string(),
                })?;
                let row = headers
                    .iter()
                    .cloned()
                    .zip(record.iter().map(str::to_string))
                    .collect();
                rows.push((line, row));
            }
            Ok(rows)
        }
        Format::JsonLines => {
            let file = fs::File::open(path).map_err(io)?;
            let mut rows = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line)
                    .map_err(|e| CorpusError::Row {
                        row: line_no,
                        field: "*".into(),
                        message: e.to_string(),
                    })?;
                let row = value
                    .into_iter()
                    .map(|(k, v)| {
                        let s = match v {
                            serde_json::Value::String(s) => s,
                            serde_json::Value::Null => String::new(),
                            other => other.to_string(),
                        };
                        (k.to_ascii_lowercase(), s)
                    })
                    .collect();
                rows.push((line_no, row));
            }
            Ok(rows)
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CorpusError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CorpusError::io(path, io),
        other => CorpusError::Document {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Loads reference annotations; one record per row, blank numeric cells
/// and `x` read as unknown.
pub fn load_annotations(path: &Path) -> Result<Vec<IcoRecord>, CorpusError> {
    let mut ordinals: HashMap<String, usize> = HashMap::new();
    read_rows(path)?
        .into_iter()
        .map(|(line, row)| {
            let doc = cell(&row, "pmcid").to_string();
            let n = ordinals.entry(doc).or_insert(0);
            let record = record_from_row(&row, line, *n)?;
            *n += 1;
            Ok(record)
        })
        .collect()
}

fn row_cells(record: &IcoRecord) -> Vec<String> {
    let unknown = || MaybeNumber::Unknown.to_string();
    let mut numeric = vec![unknown(); 8];
    match &record.reference {
        Some(Finding::Binary(b)) => {
            for (slot, v) in [0, 1, 2, 3].into_iter().zip(b.values()) {
                numeric[slot] = v.to_string();
            }
        }
        Some(Finding::Continuous(c)) => {
            numeric[1] = c.intervention_group_size.to_string();
            numeric[3] = c.comparator_group_size.to_string();
            numeric[4] = c.intervention_mean.to_string();
            numeric[5] = c.intervention_sd.to_string();
            numeric[6] = c.comparator_mean.to_string();
            numeric[7] = c.comparator_sd.to_string();
        }
        None => {}
    }
    let mut cells = vec![
        record.document_id.clone(),
        record.intervention.clone(),
        record.comparator.clone(),
        record.outcome.clone(),
        record.reference_type.to_string(),
    ];
    cells.extend(numeric);
    cells.push(record.in_table_or_figure.to_string());
    cells
}

/// Writes records in the same schema [`load_annotations`] reads.
pub fn write_annotations(path: &Path, records: &[IcoRecord]) -> Result<(), CorpusError> {
    let io = |e| CorpusError::io(path, e);
    match format_of(path)? {
        Format::Csv => {
            let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
            writer.write_record(DATASET_COLUMNS).map_err(|e| csv_error(path, e))?;
            for record in records {
                writer.write_record(row_cells(record)).map_err(|e| csv_error(path, e))?;
            }
            writer.flush().map_err(io)?;
        }
        Format::JsonLines => {
            let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
            for record in records {
                let mut map = serde_json::Map::new();
                for (key, value) in DATASET_COLUMNS.iter().zip(row_cells(record)) {
                    let json = match *key {
                        "is_data_in_figure_or_table" => serde_json::Value::Bool(value == "true"),
                        k if k.contains("events") || k.contains("size") || k.contains("mean") || k.contains("_sd") => {
                            match value.parse::<MaybeNumber>() {
                                Ok(MaybeNumber::Known(v)) => serde_json::json!(v),
                                _ => serde_json::Value::String(value),
                            }
                        }
                        _ => serde_json::Value::String(value),
                    };
                    map.insert(key.to_string(), json);
                }
                serde_json::to_writer(&mut file, &map).map_err(|e| io(e.into()))?;
                file.write_all(b"\n").map_err(io)?;
            }
            file.flush().map_err(io)?;
        }
    }
    Ok(())
}
