//! Forest plots (SVG) and markdown metric tables.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::evaluation::{EvaluationReport, MatchReport, MseReport, TaskReport};
use crate::extraction::FindingShape;
use crate::stats::{EffectEstimate, Measure, PooledEstimate, Z_95};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisScale {
    Log,
    Linear,
}

/// One study. Values are on the estimate scale (log odds ratios for binary
/// outcomes); [`ForestPlotModel::display`] maps them for labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub study_id: String,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub weight_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestPooled {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestPlotModel {
    pub measure: Measure,
    pub measure_label: String,
    pub scale: AxisScale,
    pub rows: Vec<ForestRow>,
    pub pooled: ForestPooled,
}

impl ForestPlotModel {
    /// Value shown to readers: odds ratios are exponentiated.
    pub fn display(&self, v: f64) -> f64 {
        match self.scale {
            AxisScale::Log => v.exp(),
            AxisScale::Linear => v,
        }
    }

    /// Position of the no-effect line on the estimate scale.
    pub fn null_value(&self) -> f64 {
        0.0
    }
}

pub fn build_forest_model(estimates: &[EffectEstimate], pooled: &PooledEstimate) -> Result<ForestPlotModel, ReportError> {
    if estimates.is_empty() {
        return Err(ReportError::Contract("no studies to plot".into()));
    }
    if let Some(e) = estimates.iter().find(|e| e.measure != pooled.measure) {
        return Err(ReportError::Contract(format!(
            "study {} is not on the pooled measure",
            e.study_id
        )));
    }
    if pooled.k != estimates.len() {
        return Err(ReportError::Contract(format!(
            "pooled estimate covers {} studies, {} given",
            pooled.k,
            estimates.len()
        )));
    }
    let total: f64 = estimates.iter().map(|e| 1.0 / e.variance).sum();
    let rows = estimates
        .iter()
        .map(|e| {
            let half = Z_95 * e.variance.sqrt();
            ForestRow {
                study_id: e.study_id.clone(),
                point: e.point,
                ci_low: e.point - half,
                ci_high: e.point + half,
                weight_pct: 100.0 * (1.0 / e.variance) / total,
            }
        })
        .collect();
    Ok(ForestPlotModel {
        measure: pooled.measure,
        measure_label: pooled.measure.label().to_string(),
        scale: match pooled.measure {
            Measure::LogOddsRatio => AxisScale::Log,
            Measure::Smd => AxisScale::Linear,
        },
        rows,
        pooled: ForestPooled {
            point: pooled.point,
            ci_low: pooled.ci_low,
            ci_high: pooled.ci_high,
        },
    })
}

// Fixed layout, in px.
const WIDTH: f64 = 820.0;
const ROW_HEIGHT: f64 = 26.0;
const TOP: f64 = 50.0;
const LABEL_X: f64 = 12.0;
const PLOT_LEFT: f64 = 230.0;
const PLOT_RIGHT: f64 = 560.0;
const VALUE_X: f64 = 580.0;
const WEIGHT_X: f64 = 808.0;
const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\"";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn x(&self, v: f64) -> f64 {
        PLOT_LEFT + (v - self.lo) / (self.hi - self.lo) * (PLOT_RIGHT - PLOT_LEFT)
    }
}

fn axis_for(model: &ForestPlotModel) -> Axis {
    let values = model
        .rows
        .iter()
        .flat_map(|r| [r.ci_low, r.ci_high])
        .chain([model.pooled.ci_low, model.pooled.ci_high, model.null_value()]);
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.05).max(0.05);
    Axis {
        lo: lo - pad,
        hi: hi + pad,
    }
}

/// Tick positions on the estimate scale.
fn ticks(model: &ForestPlotModel, axis: &Axis) -> Vec<f64> {
    match model.scale {
        AxisScale::Log => {
            let candidates = [
                0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0,
                500.0, 1000.0,
            ];
            let inside = |c: &&f64| c.ln() >= axis.lo && c.ln() <= axis.hi;
            let mut chosen: Vec<f64> = candidates.iter().filter(inside).copied().collect();
            if chosen.len() > 7 {
                // Too dense: keep powers of ten.
                chosen.retain(|c| c.log10().round() == c.log10());
            }
            chosen.into_iter().map(f64::ln).collect()
        }
        AxisScale::Linear => {
            let span = axis.hi - axis.lo;
            let raw = span / 5.0;
            let magnitude = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * magnitude)
                .find(|s| *s >= raw)
                .unwrap_or(10.0 * magnitude);
            let first = (axis.lo / step).ceil() as i64;
            let last = (axis.hi / step).floor() as i64;
            (first..=last).map(|i| i as f64 * step).collect()
        }
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Standalone SVG 1.1 forest plot: one weighted square and whisker per
/// study, a diamond for the pooled estimate and a line at no effect.
pub fn render_forest_svg(model: &ForestPlotModel) -> String {
    let axis = axis_for(model);
    let n = model.rows.len() as f64;
    let pooled_y = TOP + (n + 0.5) * ROW_HEIGHT + 8.0;
    let axis_y = pooled_y + ROW_HEIGHT;
    let height = axis_y + 50.0;
    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {WIDTH:.0} {height:.0}\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{WIDTH:.0}\" height=\"{height:.0}\" fill=\"white\"/>");
    let _ = writeln!(s, "<g {FONT}>");
    let _ = writeln!(s, "<text x=\"{LABEL_X:.2}\" y=\"{:.2}\" font-weight=\"bold\">Study</text>", TOP - 16.0);
    let _ = writeln!(
        s,
        "<text x=\"{VALUE_X:.2}\" y=\"{:.2}\" font-weight=\"bold\">{} [95% CI]</text>",
        TOP - 16.0,
        escape(&model.measure_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"{WEIGHT_X:.2}\" y=\"{:.2}\" font-weight=\"bold\" text-anchor=\"end\">Weight</text>",
        TOP - 16.0
    );

    let null_x = axis.x(model.null_value());
    let _ = writeln!(
        s,
        "<line class=\"null-line\" x1=\"{null_x:.2}\" y1=\"{:.2}\" x2=\"{null_x:.2}\" y2=\"{axis_y:.2}\" stroke=\"#666\" stroke-dasharray=\"4 3\"/>",
        TOP - 6.0
    );

    for (i, row) in model.rows.iter().enumerate() {
        let y = TOP + (i as f64 + 0.5) * ROW_HEIGHT;
        let side = 5.0 + 13.0 * (row.weight_pct / 100.0).sqrt();
        let x = axis.x(row.point);
        let _ = writeln!(
            s,
            "<text x=\"{LABEL_X:.2}\" y=\"{:.2}\">{}</text>",
            y + 4.0,
            escape(&row.study_id)
        );
        let _ = writeln!(
            s,
            "<line class=\"ci-whisker\" x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>",
            axis.x(row.ci_low),
            axis.x(row.ci_high)
        );
        let _ = writeln!(
            s,
            "<rect class=\"study-marker\" x=\"{:.2}\" y=\"{:.2}\" width=\"{side:.2}\" height=\"{side:.2}\" fill=\"#1f4e79\"/>",
            x - side / 2.0,
            y - side / 2.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{VALUE_X:.2}\" y=\"{:.2}\">{:.2} [{:.2}, {:.2}]</text>",
            y + 4.0,
            model.display(row.point),
            model.display(row.ci_low),
            model.display(row.ci_high)
        );
        let _ = writeln!(
            s,
            "<text x=\"{WEIGHT_X:.2}\" y=\"{:.2}\" text-anchor=\"end\">{:.1}%</text>",
            y + 4.0,
            row.weight_pct
        );
    }

    let p = &model.pooled;
    let (xl, xc, xr) = (axis.x(p.ci_low), axis.x(p.point), axis.x(p.ci_high));
    let _ = writeln!(
        s,
        "<text x=\"{LABEL_X:.2}\" y=\"{:.2}\" font-weight=\"bold\">Total (fixed effect)</text>",
        pooled_y + 4.0
    );
    let _ = writeln!(
        s,
        "<polygon class=\"pooled-diamond\" points=\"{xl:.2},{pooled_y:.2} {xc:.2},{:.2} {xr:.2},{pooled_y:.2} {xc:.2},{:.2}\" fill=\"black\"/>",
        pooled_y - 7.0,
        pooled_y + 7.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{VALUE_X:.2}\" y=\"{:.2}\" font-weight=\"bold\">{:.2} [{:.2}, {:.2}]</text>",
        pooled_y + 4.0,
        model.display(p.point),
        model.display(p.ci_low),
        model.display(p.ci_high)
    );
    let _ = writeln!(
        s,
        "<text x=\"{WEIGHT_X:.2}\" y=\"{:.2}\" font-weight=\"bold\" text-anchor=\"end\">100.0%</text>",
        pooled_y + 4.0
    );

    let _ = writeln!(
        s,
        "<line class=\"axis\" x1=\"{PLOT_LEFT:.2}\" y1=\"{axis_y:.2}\" x2=\"{PLOT_RIGHT:.2}\" y2=\"{axis_y:.2}\" stroke=\"black\"/>"
    );
    for t in ticks(model, &axis) {
        let x = axis.x(t);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{axis_y:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            axis_y + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            axis_y + 18.0,
            fmt_tick(model.display(t))
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        axis_y + 36.0,
        escape(&model.measure_label)
    );
    s.push_str("</g>\n</svg>\n");
    s
}

fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn field_abbreviation(field: &str) -> &str {
    match field {
        "intervention_events" => "IE",
        "intervention_group_size" => "IGS",
        "comparator_events" => "CE",
        "comparator_group_size" => "CGS",
        "intervention_mean" => "IM",
        "intervention_sd" => "ISD",
        "comparator_mean" => "CM",
        "comparator_sd" => "CSD",
        other => other,
    }
}

fn table(out: &mut String, title: &str, n: usize, models: &[&str], rows: &[(String, Vec<String>)]) {
    let _ = writeln!(out, "### {title}\n\nn = {n}\n");
    let _ = writeln!(out, "| Metric | {} |", models.join(" | "));
    let _ = writeln!(out, "|---|{}", "---:|".repeat(models.len()));
    for (label, cells) in rows {
        let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
    }
    out.push('\n');
}

fn mse_cell(m: &MseReport) -> String {
    m.value.as_ref().map(|v| fixed(v.mse, 3)).unwrap_or_else(|| "-".into())
}

fn findings_rows(reports: &[&MatchReport], mses: &[&MseReport], shape: FindingShape) -> Vec<(String, Vec<String>)> {
    let empty = reports.iter().all(|r| r.n == 0);
    let rate = |v: f64| if empty { "-".to_string() } else { fixed(v, 3) };
    let mut rows = vec![(
        "Exact Match - Total".to_string(),
        reports.iter().map(|r| rate(r.total_exact)).collect(),
    )];
    for (i, field) in shape.field_names().iter().enumerate() {
        rows.push((
            format!("Exact Match - {}", field_abbreviation(field)),
            reports.iter().map(|r| rate(r.per_field_exact[i].rate)).collect(),
        ));
    }
    for k in (1..shape.field_count()).rev() {
        rows.push((
            format!("Partial Match - {k}"),
            reports
                .iter()
                .map(|r| rate(r.partial_at_k.get(&k).copied().unwrap_or(0.0)))
                .collect(),
        ));
    }
    rows.push(("MSE".into(), mses.iter().map(|m| mse_cell(m)).collect()));
    rows.push((
        "# Unknowns".into(),
        reports.iter().map(|r| r.n_unknown_mistakes.to_string()).collect(),
    ));
    rows.push((
        "% Complete".into(),
        reports
            .iter()
            .map(|r| if empty { "-".into() } else { fixed(r.pct_complete, 2) })
            .collect(),
    ));
    rows
}

fn binary_task(r: &EvaluationReport) -> &TaskReport {
    &r.binary
}

fn continuous_task(r: &EvaluationReport) -> &TaskReport {
    &r.continuous
}

/// Markdown tables for outcome type, binary and continuous extraction, one
/// column per report.
pub fn render_tables(reports: &[EvaluationReport]) -> String {
    let models: Vec<&str> = reports.iter().map(|r| r.model_name.as_str()).collect();
    let n = |f: &dyn Fn(&EvaluationReport) -> usize| reports.first().map(f).unwrap_or(0);
    let mut out = String::new();

    let types_empty = reports.iter().all(|r| r.types.n == 0);
    let rate = |v: f64| if types_empty { "-".to_string() } else { fixed(v, 3) };
    let type_rows = vec![
        ("Accuracy".to_string(), reports.iter().map(|r| rate(r.types.accuracy)).collect()),
        ("F1 - Binary".to_string(), reports.iter().map(|r| rate(r.types.f1_binary)).collect()),
        ("F1 - Continuous".to_string(), reports.iter().map(|r| rate(r.types.f1_continuous)).collect()),
        ("# Unknowns".to_string(), reports.iter().map(|r| r.types.n_unknowns.to_string()).collect()),
    ];
    table(&mut out, "Outcome type", n(&|r| r.types.n), &models, &type_rows);

    for (title, shape, task) in [
        ("Binary outcomes", FindingShape::Binary, binary_task as fn(&EvaluationReport) -> &TaskReport),
        ("Continuous outcomes", FindingShape::Continuous, continuous_task),
    ] {
        let matches: Vec<&MatchReport> = reports.iter().map(|r| &task(r).matches).collect();
        let mses: Vec<&MseReport> = reports.iter().map(|r| &task(r).mse).collect();
        table(
            &mut out,
            title,
            n(&|r| task(r).matches.n),
            &models,
            &findings_rows(&matches, &mses, shape),
        );
    }
    out
}
