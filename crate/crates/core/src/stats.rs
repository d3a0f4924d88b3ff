//! Effect sizes from raw findings and inverse-variance fixed-effect pooling.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::corpus::IcoRecord;
use crate::extraction::{BinaryFinding, ContinuousFinding, ExtractionTrace, Finding, FindingShape, MaybeNumber};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("incomplete data: `{0}` is unknown")]
    Incomplete(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate variance: {0}")]
    Degenerate(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    LogOddsRatio,
    Smd,
}

impl Measure {
    pub fn label(self) -> &'static str {
        match self {
            Measure::LogOddsRatio => "Odds ratio",
            Measure::Smd => "Std. mean difference",
        }
    }

    pub fn for_shape(shape: FindingShape) -> Measure {
        match shape {
            FindingShape::Binary => Measure::LogOddsRatio,
            FindingShape::Continuous => Measure::Smd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub measure: Measure,
    pub point: f64,
    pub variance: f64,
    #[serde(default)]
    pub study_id: String,
}

impl EffectEstimate {
    pub fn with_study_id(mut self, id: impl Into<String>) -> Self {
        self.study_id = id.into();
        self
    }

    pub fn standard_error(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub measure: Measure,
    pub point: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub k: usize,
}

fn known(value: MaybeNumber, field: &'static str) -> Result<f64, StatsError> {
    value.value().ok_or(StatsError::Incomplete(field))
}

fn count(value: f64, field: &str) -> Result<f64, StatsError> {
    if value < 0.0 || value.fract() != 0.0 {
        return Err(StatsError::Domain(format!("{field} = {value} is not a whole count")));
    }
    Ok(value)
}

struct Table {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

fn two_by_two(f: &BinaryFinding) -> Result<Table, StatsError> {
    let ie = count(known(f.intervention_events, "intervention_events")?, "intervention_events")?;
    let igs = count(known(f.intervention_group_size, "intervention_group_size")?, "intervention_group_size")?;
    let ce = count(known(f.comparator_events, "comparator_events")?, "comparator_events")?;
    let cgs = count(known(f.comparator_group_size, "comparator_group_size")?, "comparator_group_size")?;
    if igs == 0.0 || cgs == 0.0 {
        return Err(StatsError::Domain("group size must be positive".into()));
    }
    if ie > igs || ce > cgs {
        return Err(StatsError::Domain("events exceed group size".into()));
    }
    Ok(Table {
        a: ie,
        b: igs - ie,
        c: ce,
        d: cgs - ce,
    })
}

/// Log odds ratio with a 0.5 correction on every cell when any cell is zero.
pub fn log_odds_ratio(f: &BinaryFinding) -> Result<EffectEstimate, StatsError> {
    let Table { mut a, mut b, mut c, mut d } = two_by_two(f)?;
    if a == 0.0 || b == 0.0 || c == 0.0 || d == 0.0 {
        a += 0.5;
        b += 0.5;
        c += 0.5;
        d += 0.5;
    }
    Ok(EffectEstimate {
        measure: Measure::LogOddsRatio,
        // Grouped by arm pair so that swapping arms negates the point and
        // keeps the variance bit for bit.
        point: (a.ln() - c.ln()) - (b.ln() - d.ln()),
        variance: (1.0 / a + 1.0 / c) + (1.0 / b + 1.0 / d),
        study_id: String::new(),
    })
}

/// No events in either arm, or events in every participant of both arms.
/// Such tables carry no information on the odds ratio and are left out of
/// pooling.
pub fn is_double_zero(f: &BinaryFinding) -> bool {
    two_by_two(f).is_ok_and(|t| (t.a == 0.0 && t.c == 0.0) || (t.b == 0.0 && t.d == 0.0))
}

/// Hedges g with the small-sample correction.
pub fn standardized_mean_difference(f: &ContinuousFinding) -> Result<EffectEstimate, StatsError> {
    let m1 = known(f.intervention_mean, "intervention_mean")?;
    let s1 = known(f.intervention_sd, "intervention_sd")?;
    let n1 = known(f.intervention_group_size, "intervention_group_size")?;
    let m2 = known(f.comparator_mean, "comparator_mean")?;
    let s2 = known(f.comparator_sd, "comparator_sd")?;
    let n2 = known(f.comparator_group_size, "comparator_group_size")?;
    if s1 < 0.0 || s2 < 0.0 {
        return Err(StatsError::Domain("standard deviation is negative".into()));
    }
    for (n, field) in [(n1, "intervention_group_size"), (n2, "comparator_group_size")] {
        count(n, field)?;
        if n < 2.0 {
            return Err(StatsError::Domain(format!("{field} must be at least 2")));
        }
    }
    let n = n1 + n2;
    let pooled = (((n1 - 1.0) * s1 * s1 + (n2 - 1.0) * s2 * s2) / (n - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(StatsError::Degenerate("pooled standard deviation is zero".into()));
    }
    let d = (m1 - m2) / pooled;
    let j = 1.0 - 3.0 / (4.0 * n - 9.0);
    let point = j * d;
    let variance = j * j * (n / (n1 * n2) + d * d / (2.0 * n));
    if !point.is_finite() || !variance.is_finite() {
        return Err(StatsError::Degenerate("estimate is not finite".into()));
    }
    Ok(EffectEstimate {
        measure: Measure::Smd,
        point,
        variance,
        study_id: String::new(),
    })
}

/// Standard deviation back-calculated from a confidence interval of a mean.
/// Large groups (n > 60) use the normal divisor, 3.92 at 95%; smaller ones
/// use twice the t quantile with n − 1 degrees of freedom.
pub fn sd_from_ci(n: u64, ci_low: f64, ci_high: f64, level: f64) -> Result<f64, StatsError> {
    if n < 2 {
        return Err(StatsError::Domain("n must be at least 2".into()));
    }
    if !(ci_low.is_finite() && ci_high.is_finite() && ci_high > ci_low) {
        return Err(StatsError::Domain(format!("invalid interval ({ci_low}, {ci_high})")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Domain(format!("invalid confidence level {level}")));
    }
    let p = (1.0 + level) / 2.0;
    let divisor = if n > 60 {
        if (level - 0.95).abs() < 1e-12 {
            3.92
        } else {
            2.0 * Normal::standard().inverse_cdf(p)
        }
    } else {
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| StatsError::Domain(e.to_string()))?;
        2.0 * t.inverse_cdf(p)
    };
    Ok((n as f64).sqrt() * (ci_high - ci_low) / divisor)
}

/// Inverse-variance weighted mean with a normal 95% interval.
pub fn fixed_effect_pool(estimates: &[EffectEstimate]) -> Result<PooledEstimate, StatsError> {
    let first = estimates
        .first()
        .ok_or_else(|| StatsError::Domain("nothing to pool".into()))?;
    if estimates.iter().any(|e| e.measure != first.measure) {
        return Err(StatsError::Contract("cannot pool different measures".into()));
    }
    if let Some(bad) = estimates.iter().find(|e| !(e.variance > 0.0 && e.variance.is_finite() && e.point.is_finite())) {
        return Err(StatsError::Domain(format!("study {} has an invalid estimate", bad.study_id)));
    }
    // Summing in a canonical order makes the result independent of input
    // order down to the last bit.
    let mut studies: Vec<(f64, f64)> = estimates.iter().map(|e| (e.variance, e.point)).collect();
    studies.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let total_weight: f64 = studies.iter().map(|(v, _)| 1.0 / v).sum();
    let weighted: f64 = studies.iter().map(|(v, p)| p / v).sum();
    // Rounding must not carry the mean outside the study range or the
    // variance above the smallest study variance.
    let (lo, hi) = studies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, p)| (lo.min(*p), hi.max(*p)));
    let point = (weighted / total_weight).clamp(lo, hi);
    let variance = (1.0 / total_weight).min(studies[0].0);
    let half = Z_95 * variance.sqrt();
    Ok(PooledEstimate {
        measure: first.measure,
        point,
        variance,
        ci_low: point - half,
        ci_high: point + half,
        k: estimates.len(),
    })
}

/// Outcome of trying to turn one finding into an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecordEstimate {
    Complete { estimate: EffectEstimate },
    Incomplete { reason: String },
}

impl RecordEstimate {
    pub fn estimate(&self) -> Option<&EffectEstimate> {
        match self {
            RecordEstimate::Complete { estimate } => Some(estimate),
            RecordEstimate::Incomplete { .. } => None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.estimate().is_some()
    }
}

pub fn estimate_for_finding(study_id: &str, finding: &Finding) -> RecordEstimate {
    let result = match finding {
        Finding::Binary(b) => log_odds_ratio(b),
        Finding::Continuous(c) => standardized_mean_difference(c),
    };
    match result {
        Ok(e) => RecordEstimate::Complete {
            estimate: e.with_study_id(study_id),
        },
        Err(e) => RecordEstimate::Incomplete { reason: e.to_string() },
    }
}

/// Estimate from a record's reference annotation.
pub fn estimate_for_record(ico: &IcoRecord) -> RecordEstimate {
    match &ico.reference {
        Some(f) => estimate_for_finding(&ico.id, f),
        None => RecordEstimate::Incomplete {
            reason: "outcome type is unknown".into(),
        },
    }
}

/// Estimate from a model's merged finding, read as `shape`.
pub fn estimate_for_trace(trace: &ExtractionTrace, shape: FindingShape) -> RecordEstimate {
    estimate_for_finding(&trace.record_id, &trace.finding_as(shape))
}
