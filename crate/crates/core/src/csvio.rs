//! Column-oriented CSV output: header row, SI units, time first.

use std::path::Path;

use crate::error::{Error, Result};

/// A named set of equal-length columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.columns.push((name.into(), values));
        self
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.1.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.0 == name).map(|c| c.1.as_slice())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let n = self.rows();
        if let Some((name, _)) = self.columns.iter().find(|c| c.1.len() != n) {
            return Err(Error::Domain(format!("column {name} length differs from {n}")));
        }
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(self.columns.iter().map(|c| c.0.as_str())).map_err(csv_err)?;
        for i in 0..n {
            w.write_record(self.columns.iter().map(|c| format_value(c.1[i]))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Unreadable {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Parse {
                path: path.to_path_buf(),
                message: format!("{other:?}"),
            },
        })?;
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let headers = r.headers().map_err(|e| parse(e.to_string()))?.clone();
        let mut columns: Vec<(String, Vec<f64>)> = headers.iter().map(|h| (h.to_string(), Vec::new())).collect();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| parse(e.to_string()))?;
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                let v = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse(format!("row {}: column {}: not a number: {field:?}", row + 1, col.0)))?;
                col.1.push(v);
            }
        }
        Ok(Self { columns })
    }
}

/// Shortest scientific form that parses back to the same `f64`, so logs
/// round-trip exactly and identical runs give identical bytes.
pub fn format_value(v: f64) -> String {
    format!("{v:e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Domain(format!("csv: {other:?}")),
    }
}
