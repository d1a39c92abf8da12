//! CSV tables and atomic output.

use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Numeric CSV with a mandatory header. Empty cells are kept as `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&bytes).map_err(|e| match e {
            CliError::Input(msg) => CliError::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(bytes: &[u8]) -> CliResult<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::input(format!("bad CSV header: {e}")))?
            .iter()
            .map(|h| h.trim().to_owned())
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(CliError::input("CSV header is missing"));
        }
        for (i, h) in headers.iter().enumerate() {
            if headers[..i].contains(h) {
                return Err(CliError::input(format!("duplicate column '{h}'")));
            }
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CliError::input(format!("row {}: {e}", r + 1)))?;
            for (c, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                let value = if cell.is_empty() {
                    None
                } else {
                    let v: f64 = cell.parse().map_err(|_| {
                        CliError::input(format!("row {} column '{}': '{cell}' is not a number", r + 1, headers[c]))
                    })?;
                    if !v.is_finite() {
                        return Err(CliError::input(format!(
                            "row {} column '{}': value must be finite",
                            r + 1,
                            headers[c]
                        )));
                    }
                    Some(v)
                };
                columns[c].push(value);
            }
        }
        Ok(Table { headers, columns })
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn optional(&self, name: &str) -> Option<&[Option<f64>]> {
        self.headers.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }

    pub fn column(&self, name: &str) -> CliResult<&[Option<f64>]> {
        self.optional(name)
            .ok_or_else(|| CliError::input(format!("missing column '{name}' (found: {})", self.headers.join(","))))
    }

    /// A column with no empty cells.
    pub fn dense(&self, name: &str) -> CliResult<Vec<f64>> {
        self.column(name)?
            .iter()
            .enumerate()
            .map(|(r, v)| v.ok_or_else(|| CliError::input(format!("row {} column '{name}': empty cell", r + 1))))
            .collect()
    }

    /// Rows `range` of a column, all of which must be present.
    pub fn dense_range(&self, name: &str, range: std::ops::Range<usize>) -> CliResult<Vec<f64>> {
        let col = self.column(name)?;
        range
            .map(|r| col[r].ok_or_else(|| CliError::input(format!("row {} column '{name}': empty cell", r + 1))))
            .collect()
    }

    /// State columns x1, x2, … in order.
    pub fn state_columns(&self) -> Vec<String> {
        (1..).map(|j| format!("x{j}")).take_while(|name| self.has(name)).collect()
    }
}

/// Float formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Builds CSV text from a header and rows of already formatted cells.
pub fn csv_text(headers: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer
        .write_record(headers)
        .map_err(|e| CliError::input(format!("csv: {e}")))?;
    for row in rows {
        writer.write_record(row).map_err(|e| CliError::input(format!("csv: {e}")))?;
    }
    writer.into_inner().map_err(|e| CliError::input(format!("csv: {e}")))
}

/// Writes to `path` through a temporary file in the same directory and a
/// rename, or to stdout when no path is given.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        return out
            .write_all(bytes)
            .and_then(|_| out.flush())
            .map_err(|e| CliError::input(format!("stdout: {e}")));
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::input(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}
