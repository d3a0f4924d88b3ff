//! Scoring model output against reference annotations.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::IcoRecord;
use crate::extraction::{ExtractionTrace, Finding, FindingShape, MaybeNumber, OutcomeType};
use crate::stats::{estimate_for_finding, RecordEstimate, Z_95};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("{message}: {}", ids.join(", "))]
    Misaligned { message: String, ids: Vec<String> },
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Checks that both sides list the same ids in the same order.
fn check_aligned<A, B>(left: &[(String, A)], right: &[(String, B)]) -> Result<(), EvaluationError> {
    let mut ids: Vec<String> = left
        .iter()
        .zip(right)
        .filter(|((a, _), (b, _))| a != b)
        .flat_map(|((a, _), (b, _))| [a.clone(), b.clone()])
        .collect();
    let longer = if left.len() > right.len() {
        left.iter().skip(right.len()).map(|(id, _)| id.clone()).collect::<Vec<_>>()
    } else {
        right.iter().skip(left.len()).map(|(id, _)| id.clone()).collect()
    };
    ids.extend(longer);
    if ids.is_empty() {
        Ok(())
    } else {
        Err(EvaluationError::Misaligned {
            message: "predictions and references are not aligned".into(),
            ids,
        })
    }
}

fn rate(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub f1_binary: f64,
    pub f1_continuous: f64,
    pub n_unknowns: usize,
}

/// F1 of one class. A class that appears in neither predictions nor
/// references had no chance to be wrong and scores 1.
fn f1(pairs: &[(OutcomeType, OutcomeType)], class: OutcomeType) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for &(pred, truth) in pairs {
        match (pred == class, truth == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp + fp + fneg == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

/// Accuracy over every record, unknown matching unknown; per-class F1.
pub fn score_types(
    predictions: &[(String, OutcomeType)],
    references: &[(String, OutcomeType)],
) -> Result<TypeMetrics, EvaluationError> {
    check_aligned(predictions, references)?;
    let pairs: Vec<(OutcomeType, OutcomeType)> = predictions.iter().zip(references).map(|(p, r)| (p.1, r.1)).collect();
    let hits = pairs.iter().filter(|(p, r)| p == r).count();
    Ok(TypeMetrics {
        n: pairs.len(),
        accuracy: rate(hits, pairs.len()),
        f1_binary: f1(&pairs, OutcomeType::Binary),
        f1_continuous: f1(&pairs, OutcomeType::Continuous),
        n_unknowns: pairs
            .iter()
            .filter(|(p, r)| *p == OutcomeType::Unknown && r.is_known())
            .count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRate {
    pub field: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub n: usize,
    pub total_exact: f64,
    /// In schema field order.
    pub per_field_exact: Vec<FieldRate>,
    /// Share of records with at least `k` matching fields, k = 1..F-1.
    pub partial_at_k: BTreeMap<usize, f64>,
    pub n_unknown_mistakes: usize,
    pub n_reference_complete: usize,
    /// Share of records with a computable reference estimate for which the
    /// model's data also gives an estimate, in percent.
    pub pct_complete: f64,
}

/// Reads a model finding as `shape`; another shape counts as all-unknown.
fn as_shape(finding: &Finding, shape: FindingShape) -> Finding {
    if finding.shape() == shape {
        *finding
    } else {
        Finding::unknown(shape)
    }
}

pub fn score_findings(
    model_findings: &[(String, Finding)],
    references: &[(String, Finding)],
    shape: FindingShape,
) -> Result<MatchReport, EvaluationError> {
    check_aligned(model_findings, references)?;
    if let Some((id, _)) = references.iter().find(|(_, f)| f.shape() != shape) {
        return Err(EvaluationError::Contract(format!("reference {id} is not {shape}")));
    }
    let names = shape.field_names();
    let n = references.len();
    let mut field_hits = vec![0usize; names.len()];
    let mut at_least = vec![0usize; names.len() + 1];
    let mut unknown_mistakes = 0;
    let mut reference_complete = 0;
    let mut both_complete = 0;

    for ((id, model), (_, reference)) in model_findings.iter().zip(references) {
        let model = as_shape(model, shape);
        let mut matched = 0;
        for (i, (m, r)) in model.values().into_iter().zip(reference.values()).enumerate() {
            if m == r {
                field_hits[i] += 1;
                matched += 1;
            } else if !m.is_known() {
                unknown_mistakes += 1;
            }
        }
        for slot in at_least.iter_mut().take(matched + 1) {
            *slot += 1;
        }
        if estimate_for_finding(id, reference).is_complete() {
            reference_complete += 1;
            if estimate_for_finding(id, &model).is_complete() {
                both_complete += 1;
            }
        }
    }

    Ok(MatchReport {
        n,
        total_exact: rate(at_least[names.len()], n),
        per_field_exact: names
            .iter()
            .zip(&field_hits)
            .map(|(f, &h)| FieldRate {
                field: f.to_string(),
                rate: rate(h, n),
            })
            .collect(),
        partial_at_k: (1..names.len()).map(|k| (k, rate(at_least[k], n))).collect(),
        n_unknown_mistakes: unknown_mistakes,
        n_reference_complete: reference_complete,
        pct_complete: if reference_complete == 0 {
            100.0
        } else {
            100.0 * both_complete as f64 / reference_complete as f64
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseValue {
    pub mse: f64,
    pub standard_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean absolute difference of effect estimates; `value` is `None` when no
/// record has both estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub n_pairs: usize,
    pub value: Option<MseValue>,
}

pub fn mean_standardized_error(
    model_estimates: &[(String, RecordEstimate)],
    reference_estimates: &[(String, RecordEstimate)],
) -> Result<MseReport, EvaluationError> {
    check_aligned(model_estimates, reference_estimates)?;
    let mut diffs = Vec::new();
    for ((id, m), (_, r)) in model_estimates.iter().zip(reference_estimates) {
        let (Some(m), Some(r)) = (m.estimate(), r.estimate()) else {
            continue;
        };
        if m.measure != r.measure {
            return Err(EvaluationError::Contract(format!("record {id} compares different measures")));
        }
        diffs.push((m.point - r.point).abs());
    }
    let n = diffs.len();
    if n == 0 {
        return Ok(MseReport {
            n_pairs: 0,
            value: None,
        });
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let standard_error = if n > 1 {
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    Ok(MseReport {
        n_pairs: n,
        value: Some(MseValue {
            mse: mean,
            standard_error,
            ci_low: mean - Z_95 * standard_error,
            ci_high: mean + Z_95 * standard_error,
        }),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub wrong_number: usize,
    pub unknown_for_known: usize,
    pub value_for_unknown_reference: usize,
    pub bad_format: usize,
    pub wrong_type_binary_as_continuous: usize,
    pub wrong_type_continuous_as_binary: usize,
    pub type_unknown: usize,
}

impl ErrorBreakdown {
    pub fn field_errors(&self) -> usize {
        self.wrong_number + self.unknown_for_known + self.value_for_unknown_reference
    }

    pub fn total(&self) -> usize {
        self.field_errors()
            + self.bad_format
            + self.wrong_type_binary_as_continuous
            + self.wrong_type_continuous_as_binary
            + self.type_unknown
    }
}

fn classify_fields(model: &Finding, reference: &Finding, out: &mut ErrorBreakdown) {
    for (m, r) in model.values().into_iter().zip(reference.values()) {
        match (m, r) {
            (MaybeNumber::Known(a), MaybeNumber::Known(b)) if a != b => out.wrong_number += 1,
            (MaybeNumber::Unknown, MaybeNumber::Known(_)) => out.unknown_for_known += 1,
            (MaybeNumber::Known(_), MaybeNumber::Unknown) => out.value_for_unknown_reference += 1,
            _ => {}
        }
    }
}

/// Sorts every field and type mistake into the error taxonomy. Badly
/// formatted responses are counted from the trace flags; their fields are
/// unknown and so also land in `unknown_for_known` where the reference has
/// a value.
pub fn classify_errors(traces: &[ExtractionTrace], references: &[IcoRecord]) -> Result<ErrorBreakdown, EvaluationError> {
    let t: Vec<(String, ())> = traces.iter().map(|t| (t.record_id.clone(), ())).collect();
    let r: Vec<(String, ())> = references.iter().map(|r| (r.id.clone(), ())).collect();
    check_aligned(&t, &r)?;
    let mut out = ErrorBreakdown::default();
    for (trace, reference) in traces.iter().zip(references) {
        out.bad_format += trace.format_error_count + trace.type_format_error as usize;
        match (trace.predicted_type.unwrap_or(OutcomeType::Unknown), reference.reference_type) {
            (OutcomeType::Unknown, truth) if truth.is_known() => out.type_unknown += 1,
            (OutcomeType::Continuous, OutcomeType::Binary) => out.wrong_type_binary_as_continuous += 1,
            (OutcomeType::Binary, OutcomeType::Continuous) => out.wrong_type_continuous_as_binary += 1,
            _ => {}
        }
        if let Some(reference_finding) = &reference.reference {
            classify_fields(&trace.finding_as(reference_finding.shape()), reference_finding, &mut out);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub matches: MatchReport,
    pub mse: MseReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_name: String,
    pub n_records: usize,
    pub types: TypeMetrics,
    pub binary: TaskReport,
    pub continuous: TaskReport,
    pub errors: ErrorBreakdown,
}

fn task_report(pairs: &[(&ExtractionTrace, &IcoRecord)], shape: FindingShape) -> Result<TaskReport, EvaluationError> {
    let mut model = Vec::new();
    let mut reference = Vec::new();
    for (trace, record) in pairs {
        let Some(r) = record.reference.filter(|f| f.shape() == shape) else {
            continue;
        };
        model.push((record.id.clone(), trace.finding_as(shape)));
        reference.push((record.id.clone(), r));
    }
    let matches = score_findings(&model, &reference, shape)?;
    let estimates = |v: &[(String, Finding)]| -> Vec<(String, RecordEstimate)> {
        v.iter().map(|(id, f)| (id.clone(), estimate_for_finding(id, f))).collect()
    };
    let mse = mean_standardized_error(&estimates(&model), &estimates(&reference))?;
    Ok(TaskReport { matches, mse })
}

/// Full report for one model. Every record must have exactly one trace;
/// traces may come in any order.
pub fn evaluate(traces: &[ExtractionTrace], records: &[IcoRecord]) -> Result<EvaluationReport, EvaluationError> {
    let by_id: HashMap<&str, &ExtractionTrace> = traces.iter().map(|t| (t.record_id.as_str(), t)).collect();
    let mut missing: Vec<String> = records
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    let known: std::collections::HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    missing.extend(
        traces
            .iter()
            .filter(|t| !known.contains(t.record_id.as_str()))
            .map(|t| t.record_id.clone()),
    );
    if !missing.is_empty() || by_id.len() != traces.len() {
        if missing.is_empty() {
            return Err(EvaluationError::Contract("duplicate trace ids".into()));
        }
        return Err(EvaluationError::Misaligned {
            message: "dataset and trace ids differ".into(),
            ids: missing,
        });
    }
    let pairs: Vec<(&ExtractionTrace, &IcoRecord)> = records.iter().map(|r| (by_id[r.id.as_str()], r)).collect();
    let ordered: Vec<ExtractionTrace> = pairs.iter().map(|(t, _)| (*t).clone()).collect();

    let predictions: Vec<(String, OutcomeType)> = pairs
        .iter()
        .map(|(t, r)| (r.id.clone(), t.predicted_type.unwrap_or(OutcomeType::Unknown)))
        .collect();
    let truth: Vec<(String, OutcomeType)> = records.iter().map(|r| (r.id.clone(), r.reference_type)).collect();

    Ok(EvaluationReport {
        model_name: traces.first().map(|t| t.model_name.clone()).unwrap_or_default(),
        n_records: records.len(),
        types: score_types(&predictions, &truth)?,
        binary: task_report(&pairs, FindingShape::Binary)?,
        continuous: task_report(&pairs, FindingShape::Continuous)?,
        errors: classify_errors(&ordered, records)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::BinaryFinding;
    use crate::stats::{EffectEstimate, Measure};
    use approx::assert_abs_diff_eq;
    use OutcomeType::{Binary as B, Continuous as C, Unknown as U};

    fn ids<T: Clone>(v: &[T]) -> Vec<(String, T)> {
        v.iter().enumerate().map(|(i, x)| (format!("r{i}"), x.clone())).collect()
    }

    fn bin(v: [f64; 4]) -> Finding {
        Finding::Binary(BinaryFinding::from_values(v))
    }

    fn complete(point: f64) -> RecordEstimate {
        RecordEstimate::Complete {
            estimate: EffectEstimate {
                measure: Measure::LogOddsRatio,
                point,
                variance: 1.0,
                study_id: String::new(),
            },
        }
    }

    #[test]
    fn types_self_and_all_unknown() {
        let refs = ids(&[B, C, C, U]);
        let m = score_types(&refs, &refs).unwrap();
        assert_eq!((m.accuracy, m.f1_binary, m.f1_continuous, m.n_unknowns), (1.0, 1.0, 1.0, 0));
        let m = score_types(&ids(&[U, U, U]), &ids(&[B, C, C])).unwrap();
        assert_eq!((m.accuracy, m.n_unknowns), (0.0, 3));
    }

    #[test]
    fn majority_class_prediction() {
        let m = score_types(&ids(&[C, C, C, C]), &ids(&[B, C, C, C])).unwrap();
        assert_abs_diff_eq!(m.accuracy, 0.75);
        assert_eq!(m.f1_binary, 0.0);
        // tp 3, fp 1, fn 0
        assert_abs_diff_eq!(m.f1_continuous, 6.0 / 7.0);
    }

    #[test]
    fn misaligned_ids_listed() {
        let err = score_types(&ids(&[B]), &[("other".to_string(), B)]).unwrap_err();
        assert!(err.to_string().contains("other"), "{err}");
        assert!(score_types(&ids(&[B, B]), &ids(&[B])).is_err());
    }

    #[test]
    fn one_field_off() {
        let r = score_findings(
            &ids(&[bin([10.0, 20.0, 5.0, 21.0])]),
            &ids(&[bin([10.0, 20.0, 5.0, 20.0])]),
            FindingShape::Binary,
        )
        .unwrap();
        assert_eq!(r.total_exact, 0.0);
        assert_eq!(r.partial_at_k.values().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 1.0]);
        assert_eq!(r.per_field_exact[3].rate, 0.0);
        assert_eq!(r.per_field_exact[0].field, "intervention_events");
        assert_eq!(r.pct_complete, 100.0);
    }

    #[test]
    fn all_unknown_model() {
        let refs = ids(&[bin([10.0, 20.0, 5.0, 20.0]), Finding::unknown(FindingShape::Binary)]);
        let model = ids(&[Finding::unknown(FindingShape::Binary); 2]);
        let r = score_findings(&model, &refs, FindingShape::Binary).unwrap();
        assert_eq!(r.total_exact, 0.5);
        assert_eq!(r.pct_complete, 0.0);
        assert_eq!(r.n_unknown_mistakes, 4);
    }

    #[test]
    fn wrong_shape_model_is_unknown() {
        let refs = ids(&[bin([10.0, 20.0, 5.0, 20.0])]);
        let model = ids(&[Finding::unknown(FindingShape::Continuous)]);
        let r = score_findings(&model, &refs, FindingShape::Binary).unwrap();
        assert_eq!(r.n_unknown_mistakes, 4);
        assert!(score_findings(&refs, &model, FindingShape::Binary).is_err());
    }

    #[test]
    fn mse_values() {
        let m = ids(&[complete(1.1), complete(2.3), RecordEstimate::Incomplete { reason: String::new() }]);
        let r = ids(&[complete(1.0), complete(2.0), complete(0.0)]);
        let rep = mean_standardized_error(&m, &r).unwrap();
        assert_eq!(rep.n_pairs, 2);
        let v = rep.value.unwrap();
        assert_abs_diff_eq!(v.mse, 0.2, epsilon = 1e-12);
        // sample sd of (0.1, 0.3) is sqrt(0.02); se = 0.1
        assert_abs_diff_eq!(v.standard_error, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(v.ci_low, 0.2 - Z_95 * 0.1, epsilon = 1e-12);

        let same = mean_standardized_error(&r, &r).unwrap().value.unwrap();
        assert_eq!((same.mse, same.standard_error), (0.0, 0.0));

        let none = ids(&[RecordEstimate::Incomplete { reason: String::new() }]);
        let empty = mean_standardized_error(&none, &ids(&[complete(1.0)])).unwrap();
        assert_eq!(empty, MseReport { n_pairs: 0, value: None });
    }

    fn record(id: &str, reference: Option<Finding>) -> IcoRecord {
        IcoRecord {
            id: id.into(),
            document_id: "D".into(),
            intervention: String::new(),
            comparator: String::new(),
            outcome: String::new(),
            reference_type: reference.map(|f| f.shape().outcome_type()).unwrap_or(U),
            reference,
            in_table_or_figure: false,
            has_complete_reference: false,
        }
    }

    fn trace(id: &str, predicted: OutcomeType, finding: Option<Finding>, format_errors: usize) -> ExtractionTrace {
        ExtractionTrace {
            record_id: id.into(),
            model_name: "m".into(),
            prompt_version: "v1".into(),
            predicted_type: Some(predicted),
            type_format_error: false,
            extraction_type: predicted,
            calls: vec![],
            chunk_findings: vec![],
            finding,
            conflicts: vec![],
            format_error_count: format_errors,
        }
    }

    #[test]
    fn error_taxonomy() {
        let mut reference = BinaryFinding::from_values([10.0, 20.0, 5.0, 20.0]);
        reference.comparator_group_size = MaybeNumber::Unknown;
        let records = vec![record("a", Some(Finding::Binary(reference))), record("b", Some(bin([1.0, 2.0, 1.0, 2.0])))];
        let traces = vec![
            trace("a", B, Some(bin([10.0, 21.0, 5.0, 7.0])), 0),
            trace("b", C, None, 1),
        ];
        let e = classify_errors(&traces, &records).unwrap();
        assert_eq!(e.wrong_number, 1);
        assert_eq!(e.value_for_unknown_reference, 1);
        assert_eq!(e.unknown_for_known, 4);
        assert_eq!(e.bad_format, 1);
        assert_eq!(e.wrong_type_binary_as_continuous, 1);

        let perfect: Vec<_> = records.iter().map(|r| trace(&r.id, r.reference_type, r.reference, 0)).collect();
        assert_eq!(classify_errors(&perfect, &records).unwrap(), ErrorBreakdown::default());
    }

    #[test]
    fn evaluate_perfect_and_misaligned() {
        let records = vec![record("a", Some(bin([10.0, 20.0, 5.0, 20.0]))), record("b", None)];
        let traces: Vec<_> = records.iter().rev().map(|r| trace(&r.id, r.reference_type, r.reference, 0)).collect();
        let report = evaluate(&traces, &records).unwrap();
        assert_eq!(report.types.accuracy, 1.0);
        assert_eq!(report.binary.matches.total_exact, 1.0);
        assert_eq!(report.binary.mse.value.as_ref().unwrap().mse, 0.0);
        assert_eq!(report.continuous.matches.n, 0);
        assert_eq!(report.continuous.mse.value, None);

        let err = evaluate(&traces[..1], &records).unwrap_err();
        assert!(err.to_string().contains('a'), "{err}");
    }
}
