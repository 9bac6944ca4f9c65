//! CSV and key=value writers. Floats use 17 significant digits so files
//! round-trip bit-exactly and compare byte-for-byte across runs.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::history::ConvergenceHistory;
use crate::Mat;

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

pub fn write_table<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn write_history(path: &Path, history: &ConvergenceHistory, timing: bool) -> Result<()> {
    let rows = (0..history.iterations()).map(|i| {
        vec![
            (i + 1).to_string(),
            fmt_float(history.k_estimates[i]),
            fmt_float(history.deltas[i]),
            history.ranks[i].to_string(),
            if timing { fmt_float(history.wall_times[i]) } else { String::new() },
        ]
    });
    write_table(path, &header(&["iter", "k", "delta_k", "rank", "wall_seconds"]), rows)
}

pub fn write_truncation(path: &Path, history: &ConvergenceHistory) -> Result<()> {
    let rows = history
        .discarded
        .iter()
        .zip(&history.thresholds)
        .enumerate()
        .map(|(i, (d, t))| vec![(i + 1).to_string(), fmt_float(*d), fmt_float(*t), history.ranks[i].to_string()]);
    write_table(path, &header(&["iter", "discarded", "threshold", "rank"]), rows)
}

/// Matrix with a leading index column (and optional coordinate column).
pub fn write_matrix(path: &Path, index_name: &str, coords: Option<(&str, &[f64])>, columns: &[String], m: &Mat) -> Result<()> {
    let mut head = vec![index_name.to_string()];
    if let Some((name, _)) = coords {
        head.push(name.to_string());
    }
    head.extend(columns.iter().cloned());
    let rows = (0..m.nrows()).map(|i| {
        let mut row = vec![i.to_string()];
        if let Some((_, values)) = coords {
            row.push(fmt_float(values[i]));
        }
        row.extend(m.row(i).iter().map(|v| fmt_float(*v)));
        row
    });
    write_table(path, &head, rows)
}

pub fn numbered(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}_{i}")).collect()
}

/// Flat `key=value` lines in insertion order.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }
}
