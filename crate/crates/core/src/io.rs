//! CSV and JSON artifacts. Floats are written with 17 significant digits so
//! every table re-parses to the same values; files land via temp + rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::a_family::{Conclusion, DecayRow, FredholmReport};
use crate::pole_tracker::TrajectoryRow;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs { path: path.to_path_buf(), source }
}

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(fs_err(&tmp))?;
    f.write_all(bytes).map_err(fs_err(&tmp))?;
    f.sync_all().map_err(fs_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(fs_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// A table whose rows serialize to string records.
pub trait CsvRow: DeserializeOwned {
    const HEADER: &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

impl CsvRow for TrajectoryRow {
    const HEADER: &'static [&'static str] =
        &["step", "re_k2", "im_k2", "pole_index", "re_k1", "im_k1", "klass", "tail_mass", "flags"];
    fn record(&self) -> Vec<String> {
        vec![
            self.step.to_string(),
            fmt_f64(self.re_k2),
            fmt_f64(self.im_k2),
            self.pole_index.to_string(),
            fmt_f64(self.re_k1),
            fmt_f64(self.im_k1),
            self.klass.as_str().to_string(),
            fmt_f64(self.tail_mass),
            self.flags.clone(),
        ]
    }
}

impl CsvRow for DecayRow {
    const HEADER: &'static [&'static str] = &["ell", "re_k2", "norm2", "neumann_bound"];
    fn record(&self) -> Vec<String> {
        vec![fmt_f64(self.ell), fmt_f64(self.re_k2), fmt_f64(self.norm2), fmt_f64(self.neumann_bound)]
    }
}

/// Flat form of a [`FredholmReport`] as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FredholmRow {
    pub re_k2: f64,
    pub im_k2: f64,
    pub sigma_min: f64,
    pub conclusion: Conclusion,
}

impl From<&FredholmReport> for FredholmRow {
    fn from(r: &FredholmReport) -> Self {
        Self { re_k2: r.k2.0, im_k2: r.k2.1, sigma_min: r.sigma_min, conclusion: r.conclusion }
    }
}

impl CsvRow for FredholmRow {
    const HEADER: &'static [&'static str] = &["re_k2", "im_k2", "sigma_min", "conclusion"];
    fn record(&self) -> Vec<String> {
        vec![fmt_f64(self.re_k2), fmt_f64(self.im_k2), fmt_f64(self.sigma_min), self.conclusion.as_str().to_string()]
    }
}

pub fn csv_string<R: CsvRow>(rows: &[R]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(R::HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv<R: CsvRow>(path: &Path, rows: &[R]) -> Result<(), IoError> {
    write_atomic(path, csv_string(rows)?.as_bytes())
}

/// Parses a table, insisting on the exact header.
pub fn parse_csv<R: CsvRow>(text: &str) -> Result<Vec<R>, IoError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != R::HEADER {
        return Err(IoError::Header { expected: R::HEADER.iter().map(|s| s.to_string()).collect(), found });
    }
    r.deserialize().map(|row| row.map_err(IoError::from)).collect()
}

pub fn read_csv<R: CsvRow>(path: &Path) -> Result<Vec<R>, IoError> {
    let text = fs::read_to_string(path).map_err(fs_err(path))?;
    parse_csv(&text)
}

/// Generic numeric table (band diagrams, pole lists).
pub fn write_numeric_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| fmt_f64(*x)))?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Csv(e.into_error().into()))?;
    write_atomic(path, &bytes)
}
