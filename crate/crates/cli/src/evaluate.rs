use rctmeta::evaluation::{evaluate, EvaluationError};
use rctmeta::report::render_tables;

use crate::error::{CliError, ExitKind};
use crate::io::{create_dir, load_records, read_traces, to_json, write_file, TRACES_FILE};
use crate::EvaluateArgs;

fn error_table(report: &rctmeta::evaluation::EvaluationReport) -> String {
    let e = &report.errors;
    let rows = [
        ("Wrong number", e.wrong_number),
        ("Unknown for known value", e.unknown_for_known),
        ("Value for unknown reference", e.value_for_unknown_reference),
        ("Bad format", e.bad_format),
        ("Binary read as continuous", e.wrong_type_binary_as_continuous),
        ("Continuous read as binary", e.wrong_type_continuous_as_binary),
        ("Type unknown", e.type_unknown),
        ("Total", e.total()),
    ];
    let mut out = String::from("### Errors\n\n| Kind | Count |\n|---|---:|\n");
    for (label, n) in rows {
        out.push_str(&format!("| {label} | {n} |\n"));
    }
    out
}

/// Scores `<out>/traces.jsonl` and writes `<out>/evaluation/report.json`
/// and `report.md`.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let records = load_records(&args.dataset)?;
    let traces_path = args.out.join(TRACES_FILE);
    if !traces_path.is_file() {
        return Err(CliError::data(format!(
            "no traces at {}; run `rctmeta run --out {}` first",
            traces_path.display(),
            args.out.display()
        )));
    }
    let traces = read_traces(&traces_path)?;
    let report = evaluate(&traces, &records).map_err(|e| match e {
        EvaluationError::Misaligned { .. } => CliError::data(format!(
            "traces in {} do not match the dataset: {e}",
            traces_path.display()
        )),
        other => CliError::new(ExitKind::Data, other),
    })?;

    let dir = args.out.join("evaluation");
    create_dir(&dir)?;
    write_file(&dir.join("report.json"), &to_json(&report)?)?;
    let markdown = format!(
        "# {}\n\n{}\n{}",
        report.model_name,
        render_tables(std::slice::from_ref(&report)),
        error_table(&report)
    );
    write_file(&dir.join("report.md"), &markdown)?;
    print!("{markdown}");
    Ok(())
}
