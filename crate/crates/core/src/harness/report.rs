//! Comparison tables aggregated from run directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::run::{metric_diff, METRICS_FILE, PREDICTIONS_FILE};
use crate::error::Result;
use crate::train::{Evaluation, Metrics};

pub const COLUMNS: [&str; 4] = ["MAE", "RMSE", "Rel. L2 (%)", "R2"];
const KEYS: [&str; 4] = ["mae", "rmse", "rel_l2", "r2"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dir: PathBuf,
    pub task: String,
    pub label: String,
    /// MAE (maximum absolute error), RMSE, relative L2 in percent, R².
    pub cells: [Option<f64>; 4],
    /// Largest relative difference between stored metrics and metrics
    /// recomputed from the predictions file, when both exist.
    pub recompute_diff: Option<f64>,
}

/// Reads one run directory. Absent or non-numeric metrics become `None`.
pub fn read_row(dir: &Path) -> Result<ReportRow> {
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join(METRICS_FILE))?)?;
    let text = |k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
    let m = v.get("metrics");
    let cells = KEYS.map(|k| m.and_then(|m| m.get(k)).and_then(Value::as_f64).filter(|x| x.is_finite()));
    let stored: Option<Metrics> = m.and_then(|m| serde_json::from_value(m.clone()).ok());
    let preds = dir.join(PREDICTIONS_FILE);
    let recompute_diff = match stored {
        Some(s) if preds.exists() => Some(metric_diff(&s, &Evaluation::read_csv(fs::File::open(preds)?)?.metrics)),
        _ => None,
    };
    Ok(ReportRow {
        dir: dir.to_path_buf(),
        task: text("task").unwrap_or_else(|| "N/A".into()),
        label: text("label").unwrap_or_else(|| "N/A".into()),
        cells,
        recompute_diff,
    })
}

pub fn collect_rows(dirs: &[PathBuf]) -> Result<Vec<ReportRow>> {
    let mut rows = dirs.iter().map(|d| read_row(d)).collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.task.cmp(&b.task));
    Ok(rows)
}

fn cell(v: Option<f64>, col: usize) -> String {
    match v {
        None => "N/A".into(),
        Some(x) if col == 2 => format!("{x:.3}"),
        Some(x) if col == 3 => format!("{x:.4}"),
        Some(x) => format!("{x:.3e}"),
    }
}

pub fn markdown(rows: &[ReportRow]) -> String {
    let mut s = String::from("| Task | Model |");
    for c in COLUMNS {
        let _ = write!(s, " {c} |");
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---:|".repeat(COLUMNS.len()));
    s.push('\n');
    for r in rows {
        let _ = write!(s, "| {} | {} |", r.task, r.label);
        for (i, v) in r.cells.iter().enumerate() {
            let _ = write!(s, " {} |", cell(*v, i));
        }
        s.push('\n');
    }
    s
}

pub fn csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["task", "model"];
    header.extend(KEYS);
    header.push("dir");
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.task.clone(), r.label.clone()];
        rec.extend(r.cells.iter().map(|v| v.map_or("N/A".into(), |x| format!("{x:.16e}"))));
        rec.push(r.dir.display().to_string());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
