//! Output files of a run.
//!
//! `estimates.{csv,json}` and `history.csv` depend only on the configuration
//! and seed. Timing and counters go to `run.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::run::{EstimateRow, HistoryRow, RunReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}` (csv or json)"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EstimatesFile {
    method: String,
    estimates: Vec<EstimateRow>,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Isee => "isee",
        Method::Sdm => "sdm",
        Method::Fdmis => "fdmis",
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the report into `dir` and returns the created paths.
pub fn emit(report: &RunReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let est = match format {
        Format::Csv => {
            let p = dir.join("estimates.csv");
            write_csv(&p, &report.estimates, &["parameter", "value", "cov", "n_evals", "converged"])?;
            p
        }
        Format::Json => {
            let p = dir.join("estimates.json");
            let file = EstimatesFile {
                method: method_name(report.method).into(),
                estimates: report.estimates.clone(),
            };
            fs::write(&p, serde_json::to_string_pretty(&file)? + "\n")?;
            p
        }
    };
    out.push(est);
    let hist = dir.join("history.csv");
    write_csv(&hist, &report.history, &["j", "parameter", "mu_j", "delta_j"])?;
    out.push(hist);
    let run = dir.join("run.json");
    fs::write(&run, serde_json::to_string_pretty(report)? + "\n")?;
    out.push(run);
    Ok(out)
}

/// Reads `estimates.csv` or `estimates.json` back.
pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    if path.extension().is_some_and(|e| e == "json") {
        let file: EstimatesFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        Ok(file.estimates)
    } else {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
    }
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
