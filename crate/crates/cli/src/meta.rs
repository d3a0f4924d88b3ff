use std::collections::HashMap;

use rctmeta::corpus::IcoRecord;
use rctmeta::extraction::{ExtractionTrace, Finding};
use rctmeta::report::{build_forest_model, render_forest_svg};
use rctmeta::stats::{estimate_for_finding, fixed_effect_pool, is_double_zero, EffectEstimate, PooledEstimate};
use serde::Serialize;

use crate::error::{CliError, Classify, ExitKind};
use crate::io::{create_dir, load_records, read_traces, to_json, write_file, TRACES_FILE};
use crate::MetaArgs;

#[derive(Debug, Serialize)]
struct Filter<'a> {
    intervention: Option<&'a str>,
    comparator: Option<&'a str>,
    outcome: Option<&'a str>,
    ignore_case: bool,
}

#[derive(Debug, Serialize)]
struct Skipped {
    record_id: String,
    reason: String,
}

#[derive(Debug, Serialize)]
struct PooledOutput<'a> {
    source: &'static str,
    filter: Filter<'a>,
    pooled: PooledEstimate,
    studies: Vec<EffectEstimate>,
    skipped: Vec<Skipped>,
}

fn matches(wanted: Option<&str>, actual: &str, ignore_case: bool) -> bool {
    match wanted {
        None => true,
        Some(w) if ignore_case => w.to_lowercase() == actual.to_lowercase(),
        Some(w) => w == actual,
    }
}

fn selected<'a>(records: &'a [IcoRecord], args: &MetaArgs) -> Vec<&'a IcoRecord> {
    records
        .iter()
        .filter(|r| {
            matches(args.intervention.as_deref(), &r.intervention, args.ignore_case)
                && matches(args.comparator.as_deref(), &r.comparator, args.ignore_case)
                && matches(args.outcome.as_deref(), &r.outcome, args.ignore_case)
        })
        .collect()
}

/// Plot label per record: the document id, or the record id when one
/// document contributes more than one record.
fn labels(records: &[&IcoRecord]) -> Vec<String> {
    let mut per_doc: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *per_doc.entry(&r.document_id).or_default() += 1;
    }
    records
        .iter()
        .map(|r| if per_doc[r.document_id.as_str()] > 1 { r.id.clone() } else { r.document_id.clone() })
        .collect()
}

/// Pools the records matching the ICO filter and writes
/// `<out>/meta/forest.svg`, `forest.json` and `pooled.json`.
pub fn cmd_meta_analyze(args: &MetaArgs) -> Result<(), CliError> {
    let records = load_records(&args.dataset)?;
    let chosen = selected(&records, args);

    let traces: HashMap<String, ExtractionTrace> = if args.use_reference {
        HashMap::new()
    } else {
        let path = args.out.join(TRACES_FILE);
        if !path.is_file() {
            return Err(CliError::data(format!(
                "no traces at {}; run `rctmeta run` first or pass --use-reference",
                path.display()
            )));
        }
        read_traces(&path)?.into_iter().map(|t| (t.record_id.clone(), t)).collect()
    };

    let mut studies = Vec::new();
    let mut skipped = Vec::new();
    for (record, label) in chosen.iter().zip(labels(&chosen)) {
        let finding: Option<Finding> = if args.use_reference {
            record.reference
        } else {
            match traces.get(&record.id) {
                Some(t) => t.finding,
                None => {
                    skipped.push(Skipped {
                        record_id: record.id.clone(),
                        reason: "no trace".into(),
                    });
                    continue;
                }
            }
        };
        let Some(finding) = finding else {
            skipped.push(Skipped {
                record_id: record.id.clone(),
                reason: "no finding".into(),
            });
            continue;
        };
        if let Finding::Binary(b) = &finding {
            if is_double_zero(b) {
                skipped.push(Skipped {
                    record_id: record.id.clone(),
                    reason: "no events, or only events, in both arms".into(),
                });
                continue;
            }
        }
        match estimate_for_finding(&label, &finding).estimate() {
            Some(e) => studies.push(e.clone()),
            None => skipped.push(Skipped {
                record_id: record.id.clone(),
                reason: format!("incomplete {} finding", finding.shape()),
            }),
        }
    }

    if studies.is_empty() {
        return Err(CliError::data(format!(
            "empty analysis: {} records matched the filter, none with a complete estimate",
            chosen.len()
        )));
    }
    if let Some(e) = studies.iter().find(|e| e.measure != studies[0].measure) {
        return Err(CliError::data(format!(
            "matched records mix effect measures ({} and {}); narrow the filter",
            studies[0].measure.label(),
            e.measure.label()
        )));
    }

    let pooled = fixed_effect_pool(&studies).or_exit(ExitKind::Data)?;
    let model = build_forest_model(&studies, &pooled).or_exit(ExitKind::Data)?;
    let dir = args.out.join("meta");
    create_dir(&dir)?;
    write_file(&dir.join("forest.svg"), &render_forest_svg(&model))?;
    write_file(&dir.join("forest.json"), &to_json(&model)?)?;
    let output = PooledOutput {
        source: if args.use_reference { "reference" } else { "model" },
        filter: Filter {
            intervention: args.intervention.as_deref(),
            comparator: args.comparator.as_deref(),
            outcome: args.outcome.as_deref(),
            ignore_case: args.ignore_case,
        },
        pooled,
        studies,
        skipped,
    };
    write_file(&dir.join("pooled.json"), &to_json(&output)?)?;
    println!(
        "{}: {:.4} [{:.4}, {:.4}] from {} studies ({} skipped)",
        model.measure_label,
        model.display(output.pooled.point),
        model.display(output.pooled.ci_low),
        model.display(output.pooled.ci_high),
        output.pooled.k,
        output.skipped.len()
    );
    Ok(())
}
