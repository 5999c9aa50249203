//! Per-trial CSV and aggregate JSON output.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::experiment::{RunReport, TrialRecord};

pub const CSV_FILE: &str = "trials.csv";
pub const REPORT_FILE: &str = "report.json";

/// One CSV row. Column names are part of the output format.
#[derive(Debug, Serialize)]
struct CsvRow {
    trial: usize,
    seed: u64,
    #[serde(rename = "T")]
    iterations: Option<usize>,
    #[serde(rename = "V_dagger")]
    value: Option<f64>,
    loss: Option<f64>,
    gap: Option<f64>,
    bound_thm2: f64,
    bound_thm3: Option<f64>,
    bound_lemma11: Option<f64>,
    queries: u64,
    wall_ms: f64,
}

impl From<&TrialRecord> for CsvRow {
    fn from(r: &TrialRecord) -> Self {
        CsvRow {
            trial: r.trial,
            seed: r.seed,
            iterations: r.iterations,
            value: r.value,
            loss: r.loss,
            gap: r.gap,
            bound_thm2: r.bound_thm2,
            bound_thm3: r.bound_thm3,
            bound_lemma11: r.bound_lemma11,
            queries: r.queries,
            wall_ms: r.wall_ms,
        }
    }
}

pub fn write_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in &report.trials {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(report: &RunReport, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `trials.csv` and `report.json` into `dir`.
pub fn write_all(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(report, &dir.join(CSV_FILE))?;
    write_json(report, &dir.join(REPORT_FILE))
}
