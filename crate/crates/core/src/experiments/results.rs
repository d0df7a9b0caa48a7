//! Aggregated results and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "scenario,method,snr_db,metric,mean,stderr,trials";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub snr_db: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Sample mean and standard error of the mean (`n − 1` denominator; zero
/// for a single sample).
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    /// Sorts by `(method, snr_db, metric)`.
    pub fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| a.method.cmp(&b.method).then(a.snr_db.total_cmp(&b.snr_db)).then(a.metric.cmp(&b.metric)));
    }

    pub fn get(&self, method: &str, snr_db: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method && r.snr_db == snr_db)
    }

    pub fn snr_points(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.rows.iter().map(|r| r.snr_db).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    /// CSV text, sorted, preceded by `# ` comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut sorted = self.clone();
        sorted.sort();
        let mut out = String::new();
        for c in comments {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &sorted.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.scenario, r.method, r.snr_db, r.metric, r.mean, r.stderr, r.trials
            );
        }
        out
    }

    /// Parses CSV produced by `to_csv`; comment lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h == CSV_HEADER => {}
            _ => return Err(Error::Format("missing CSV header".into())),
        }
        let mut table = ResultTable::default();
        for (idx, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Format(format!("line {}: malformed row", idx + 1));
            if f.len() != 7 {
                return Err(bad());
            }
            table.push(ResultRow {
                scenario: f[0].to_string(),
                method: f[1].to_string(),
                snr_db: f[2].parse().map_err(|_| bad())?,
                metric: f[3].to_string(),
                mean: f[4].parse().map_err(|_| bad())?,
                stderr: f[5].parse().map_err(|_| bad())?,
                trials: f[6].parse().map_err(|_| bad())?,
            });
        }
        Ok(table)
    }
}

/// Writes the sorted table as CSV with no comment lines.
pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    fs::write(path, table.to_csv(&[]))?;
    Ok(())
}
