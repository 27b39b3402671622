//! CSV input and report output.

use std::fs;
use std::path::{Path, PathBuf};

use gridsmooth::datagen::CurveBatch;
use gridsmooth::report::fmt_f64;
use gridsmooth::ExperimentReport;

use crate::error::CliError;

/// Curves read from disk and whether the file had a header row.
#[derive(Debug, Clone)]
pub struct CurveFile {
    pub batch: CurveBatch,
    pub header: bool,
}

fn input_err(path: &Path, message: String) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        message,
    }
}

/// One curve per row. A first row with no numeric cell is a header.
pub fn read_curves(path: &Path) -> Result<CurveFile, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_curves(&bytes).map_err(|m| input_err(path, m))
}

/// Parses CSV bytes; errors name the 1-based row and column.
pub fn parse_curves(bytes: &[u8]) -> Result<CurveFile, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header = false;
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("row {}: {e}", i + 1))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if i == 0 && record.iter().all(|c| c.parse::<f64>().is_err()) {
            header = true;
            width = Some(record.len());
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(format!("row {} has {} columns, expected {w}", i + 1, record.len()));
            }
            _ => width = Some(record.len()),
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("row {}, column {}: not a finite number: {cell:?}", i + 1, j + 1))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no curves in input".into());
    }
    let batch = CurveBatch::from_rows(rows, None, 0).map_err(|e| e.to_string())?;
    Ok(CurveFile { batch, header })
}

/// CSV text for `rows`, optionally headed by `t1,...,td`.
pub fn format_curves<'a>(rows: impl IntoIterator<Item = &'a [f64]>, d: usize, header: bool) -> String {
    let mut out = String::new();
    if header {
        let names: Vec<String> = (1..=d).map(|t| format!("t{t}")).collect();
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `curves.csv` -> `curves.truth.csv`.
pub fn truth_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.truth.csv"))
}

/// Writes every rendered report file into `dir`, returning the paths in order.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    report
        .render()
        .into_iter()
        .map(|(name, contents)| {
            let path = dir.join(name);
            write_file(&path, &contents)?;
            Ok(path)
        })
        .collect()
}
