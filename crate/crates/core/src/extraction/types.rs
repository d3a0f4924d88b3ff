use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Token a model (or an annotator) uses to abstain from a value.
pub const UNKNOWN_TOKEN: &str = "x";

pub const BINARY_FIELDS: [&str; 4] = [
    "intervention_events",
    "intervention_group_size",
    "comparator_events",
    "comparator_group_size",
];

pub const CONTINUOUS_FIELDS: [&str; 6] = [
    "intervention_mean",
    "intervention_sd",
    "intervention_group_size",
    "comparator_mean",
    "comparator_sd",
    "comparator_group_size",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeType {
    Binary,
    Continuous,
    Unknown,
}

impl OutcomeType {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeType::Binary => "binary",
            OutcomeType::Continuous => "continuous",
            OutcomeType::Unknown => UNKNOWN_TOKEN,
        }
    }

    pub fn is_known(self) -> bool {
        self != OutcomeType::Unknown
    }

    /// Strict label parser used for dataset files. Model text goes through
    /// [`crate::extraction::parse_outcome_type`] instead.
    pub fn from_label(label: &str) -> Option<OutcomeType> {
        match label.trim().to_ascii_lowercase().as_str() {
            "binary" => Some(OutcomeType::Binary),
            "continuous" => Some(OutcomeType::Continuous),
            "x" | "" => Some(OutcomeType::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for OutcomeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for OutcomeType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for OutcomeType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        OutcomeType::from_label(&label)
            .ok_or_else(|| de::Error::custom(format!("unknown outcome type label `{label}`")))
    }
}

/// A numeric cell that is either a finite value or the unknown token.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MaybeNumber {
    Known(f64),
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is neither a decimal literal nor the unknown token")]
pub struct InvalidNumber(pub String);

impl MaybeNumber {
    /// Builds a known value, mapping non-finite input to unknown.
    pub fn known(value: f64) -> MaybeNumber {
        if value.is_finite() {
            MaybeNumber::Known(value)
        } else {
            MaybeNumber::Unknown
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            MaybeNumber::Known(v) => Some(v),
            MaybeNumber::Unknown => None,
        }
    }

    pub fn is_known(self) -> bool {
        matches!(self, MaybeNumber::Known(_))
    }

    /// True when the value is a non-negative whole number.
    pub fn is_count(self) -> bool {
        matches!(self, MaybeNumber::Known(v) if v >= 0.0 && v.fract() == 0.0)
    }
}

impl fmt::Display for MaybeNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{}` on f64 prints the shortest round-tripping literal, never exponent form.
            MaybeNumber::Known(v) if *v == 0.0 => f.write_str("0"),
            MaybeNumber::Known(v) => write!(f, "{v}"),
            MaybeNumber::Unknown => f.write_str(UNKNOWN_TOKEN),
        }
    }
}

impl FromStr for MaybeNumber {
    type Err = InvalidNumber;

    /// Blank cells and `x` are unknown; anything else must be a finite decimal literal.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || t.eq_ignore_ascii_case(UNKNOWN_TOKEN) {
            return Ok(MaybeNumber::Unknown);
        }
        if !is_decimal_literal(t) {
            return Err(InvalidNumber(s.to_string()));
        }
        t.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(MaybeNumber::Known)
            .ok_or_else(|| InvalidNumber(s.to_string()))
    }
}

/// `[+-]?digits[.digits]` or `[+-]?.digits`; no exponents, no `inf`/`nan`.
pub(crate) fn is_decimal_literal(s: &str) -> bool {
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    match frac {
        None => !int.is_empty() && digits(int),
        Some(f) => (!int.is_empty() || !f.is_empty()) && digits(int) && digits(f) && !f.is_empty(),
    }
}

impl Serialize for MaybeNumber {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            MaybeNumber::Known(v) => serializer.serialize_f64(*v),
            MaybeNumber::Unknown => serializer.serialize_str(UNKNOWN_TOKEN),
        }
    }
}

impl<'de> Deserialize<'de> for MaybeNumber {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MaybeNumberVisitor;

        impl<'de> Visitor<'de> for MaybeNumberVisitor {
            type Value = MaybeNumber;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a finite number or the unknown token \"x\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<MaybeNumber, E> {
                if v.is_finite() {
                    Ok(MaybeNumber::Known(v))
                } else {
                    Err(E::custom("non-finite number"))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<MaybeNumber, E> {
                Ok(MaybeNumber::Known(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<MaybeNumber, E> {
                Ok(MaybeNumber::Known(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<MaybeNumber, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_unit<E: de::Error>(self) -> Result<MaybeNumber, E> {
                Ok(MaybeNumber::Unknown)
            }

            fn visit_none<E: de::Error>(self) -> Result<MaybeNumber, E> {
                Ok(MaybeNumber::Unknown)
            }
        }

        deserializer.deserialize_any(MaybeNumberVisitor)
    }
}

/// Raw 2x2 table payload for a dichotomous outcome.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinaryFinding {
    pub intervention_events: MaybeNumber,
    pub intervention_group_size: MaybeNumber,
    pub comparator_events: MaybeNumber,
    pub comparator_group_size: MaybeNumber,
}

/// Per-arm mean, SD and group size for a continuous outcome.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContinuousFinding {
    pub intervention_mean: MaybeNumber,
    pub intervention_sd: MaybeNumber,
    pub intervention_group_size: MaybeNumber,
    pub comparator_mean: MaybeNumber,
    pub comparator_sd: MaybeNumber,
    pub comparator_group_size: MaybeNumber,
}

impl BinaryFinding {
    pub fn new(ie: MaybeNumber, igs: MaybeNumber, ce: MaybeNumber, cgs: MaybeNumber) -> Self {
        BinaryFinding {
            intervention_events: ie,
            intervention_group_size: igs,
            comparator_events: ce,
            comparator_group_size: cgs,
        }
    }

    pub fn from_values(values: [f64; 4]) -> Self {
        let [a, b, c, d] = values.map(MaybeNumber::known);
        BinaryFinding::new(a, b, c, d)
    }

    pub fn values(&self) -> [MaybeNumber; 4] {
        [
            self.intervention_events,
            self.intervention_group_size,
            self.comparator_events,
            self.comparator_group_size,
        ]
    }

    fn from_array(v: [MaybeNumber; 4]) -> Self {
        BinaryFinding::new(v[0], v[1], v[2], v[3])
    }

    /// Comparator and intervention arms exchanged.
    pub fn swapped(&self) -> Self {
        BinaryFinding::new(
            self.comparator_events,
            self.comparator_group_size,
            self.intervention_events,
            self.intervention_group_size,
        )
    }
}

impl ContinuousFinding {
    pub fn from_values(values: [f64; 6]) -> Self {
        Self::from_array(values.map(MaybeNumber::known))
    }

    pub fn values(&self) -> [MaybeNumber; 6] {
        [
            self.intervention_mean,
            self.intervention_sd,
            self.intervention_group_size,
            self.comparator_mean,
            self.comparator_sd,
            self.comparator_group_size,
        ]
    }

    fn from_array(v: [MaybeNumber; 6]) -> Self {
        ContinuousFinding {
            intervention_mean: v[0],
            intervention_sd: v[1],
            intervention_group_size: v[2],
            comparator_mean: v[3],
            comparator_sd: v[4],
            comparator_group_size: v[5],
        }
    }

    pub fn swapped(&self) -> Self {
        ContinuousFinding {
            intervention_mean: self.comparator_mean,
            intervention_sd: self.comparator_sd,
            intervention_group_size: self.comparator_group_size,
            comparator_mean: self.intervention_mean,
            comparator_sd: self.intervention_sd,
            comparator_group_size: self.intervention_group_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingShape {
    Binary,
    Continuous,
}

impl FindingShape {
    pub fn field_names(self) -> &'static [&'static str] {
        match self {
            FindingShape::Binary => &BINARY_FIELDS,
            FindingShape::Continuous => &CONTINUOUS_FIELDS,
        }
    }

    pub fn field_count(self) -> usize {
        self.field_names().len()
    }

    pub fn from_outcome_type(t: OutcomeType) -> Option<FindingShape> {
        match t {
            OutcomeType::Binary => Some(FindingShape::Binary),
            OutcomeType::Continuous => Some(FindingShape::Continuous),
            OutcomeType::Unknown => None,
        }
    }

    pub fn outcome_type(self) -> OutcomeType {
        match self {
            FindingShape::Binary => OutcomeType::Binary,
            FindingShape::Continuous => OutcomeType::Continuous,
        }
    }
}

impl fmt::Display for FindingShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.outcome_type().as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Finding {
    Binary(BinaryFinding),
    Continuous(ContinuousFinding),
}

impl Finding {
    pub fn unknown(shape: FindingShape) -> Finding {
        match shape {
            FindingShape::Binary => Finding::Binary(BinaryFinding::default()),
            FindingShape::Continuous => Finding::Continuous(ContinuousFinding::default()),
        }
    }

    pub fn shape(&self) -> FindingShape {
        match self {
            Finding::Binary(_) => FindingShape::Binary,
            Finding::Continuous(_) => FindingShape::Continuous,
        }
    }

    /// Values in the order of [`FindingShape::field_names`].
    pub fn values(&self) -> Vec<MaybeNumber> {
        match self {
            Finding::Binary(b) => b.values().to_vec(),
            Finding::Continuous(c) => c.values().to_vec(),
        }
    }

    /// Inverse of [`Finding::values`]. Panics if `values` has the wrong length.
    pub fn from_values(shape: FindingShape, values: &[MaybeNumber]) -> Finding {
        match shape {
            FindingShape::Binary => {
                Finding::Binary(BinaryFinding::from_array(values.try_into().expect("4 binary fields")))
            }
            FindingShape::Continuous => Finding::Continuous(ContinuousFinding::from_array(
                values.try_into().expect("6 continuous fields"),
            )),
        }
    }

    pub fn named_values(&self) -> impl Iterator<Item = (&'static str, MaybeNumber)> {
        self.shape()
            .field_names()
            .iter()
            .copied()
            .zip(self.values())
    }

    pub fn is_all_unknown(&self) -> bool {
        self.values().iter().all(|v| !v.is_known())
    }

    /// YAML in the exact layout the extraction prompts ask for.
    pub fn to_yaml(&self) -> String {
        self.named_values()
            .map(|(k, v)| format!("{k}: {v}\n"))
            .collect()
    }
}
