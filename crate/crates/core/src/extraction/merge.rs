use serde::{Deserialize, Serialize};

use super::types::{Finding, MaybeNumber};
use super::ExtractionError;

/// Two chunks reported different known values for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConflict {
    pub field: String,
    pub kept: f64,
    pub kept_chunk: usize,
    pub discarded: f64,
    pub discarded_chunk: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedFinding {
    pub finding: Finding,
    pub conflicts: Vec<MergeConflict>,
}

/// Field-wise merge of per-chunk findings: the first known value in chunk
/// order wins; later different values are recorded as conflicts.
pub fn merge_chunk_findings(findings: &[Finding]) -> Result<MergedFinding, ExtractionError> {
    let first = findings
        .first()
        .ok_or_else(|| ExtractionError::Contract("nothing to merge".into()))?;
    let shape = first.shape();
    if let Some(other) = findings.iter().find(|f| f.shape() != shape) {
        return Err(ExtractionError::Contract(format!(
            "cannot merge {} and {} findings",
            shape,
            other.shape()
        )));
    }

    let names = shape.field_names();
    let mut merged: Vec<(MaybeNumber, usize)> = vec![(MaybeNumber::Unknown, 0); names.len()];
    let mut conflicts = Vec::new();
    for (chunk, finding) in findings.iter().enumerate() {
        for (i, value) in finding.values().into_iter().enumerate() {
            let MaybeNumber::Known(v) = value else { continue };
            match merged[i] {
                (MaybeNumber::Unknown, _) => merged[i] = (value, chunk),
                (MaybeNumber::Known(kept), kept_chunk) if kept != v => conflicts.push(MergeConflict {
                    field: names[i].to_string(),
                    kept,
                    kept_chunk,
                    discarded: v,
                    discarded_chunk: chunk,
                }),
                _ => {}
            }
        }
    }
    let values: Vec<MaybeNumber> = merged.into_iter().map(|(v, _)| v).collect();
    Ok(MergedFinding {
        finding: Finding::from_values(shape, &values),
        conflicts,
    })
}
