//! Result rows and their table, JSON and CSV renderings.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Table,
    #[default]
    Json,
    Csv,
}

/// One method's outcome for one contingency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub method: String,
    /// `None` when the scenario is infeasible.
    pub total_shed_mw: Option<f64>,
    pub violation_count: usize,
    pub wall_time_s: f64,
    pub best_candidates: Vec<usize>,
}

pub const CSV_HEADER: [&str; 5] = ["method", "load_shed_mw", "violations", "time_s", "best_candidates"];

fn shed_cell(shed: Option<f64>) -> String {
    match shed {
        Some(mw) => format!("{:.3}", if mw.abs() < 5e-4 { 0.0 } else { mw }),
        None => "infeasible".into(),
    }
}

fn candidates_cell(ids: &[usize], sep: &str) -> String {
    if ids.is_empty() {
        "-".into()
    } else {
        ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(sep)
    }
}

fn cells(r: &ScenarioReport, sep: &str) -> [String; 5] {
    [
        r.method.clone(),
        shed_cell(r.total_shed_mw),
        r.violation_count.to_string(),
        format!("{:.3}", r.wall_time_s),
        candidates_cell(&r.best_candidates, sep),
    ]
}

/// Writes `rows` in the requested format.
pub fn emit_table<W: Write>(rows: &[ScenarioReport], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in rows {
                w.write_record(cells(r, ";"))?;
            }
            w.flush()?;
        }
        OutputFormat::Table => {
            let body: Vec<[String; 5]> = rows.iter().map(|r| cells(r, ", ")).collect();
            let mut width = CSV_HEADER.map(str::len);
            for row in &body {
                for (w, c) in width.iter_mut().zip(row) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |out: &mut W, row: [&str; 5]| -> std::io::Result<()> {
                writeln!(
                    out,
                    "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}  {}",
                    row[0],
                    row[1],
                    row[2],
                    row[3],
                    row[4],
                    w0 = width[0],
                    w1 = width[1],
                    w2 = width[2],
                    w3 = width[3],
                )
            };
            line(&mut out, CSV_HEADER)?;
            for row in &body {
                line(&mut out, [&row[0], &row[1], &row[2], &row[3], &row[4]])?;
            }
        }
    }
    Ok(())
}

/// Renders `rows` to a string.
pub fn render_table(rows: &[ScenarioReport], format: OutputFormat) -> Result<String> {
    let mut buf = Vec::new();
    emit_table(rows, format, &mut buf)?;
    Ok(String::from_utf8(buf).expect("utf-8 output"))
}
