//! Multichannel signal frames: an M x L real matrix holding one channel per
//! column, plus the CSV form used by the CLI (rows = samples, columns =
//! channels, one `# key=value,...` header line).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, StcsError};

/// An M x L frame of real samples, one column per channel.
///
/// Values are validated to be finite at construction and the frame is
/// immutable afterwards, so it can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelFrame {
    values: DMatrix<f64>,
}

impl MultichannelFrame {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(StcsError::InvalidDimension(format!(
                "frame dimensions must be positive, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StcsError::InvalidValue(
                "frame contains non-finite samples".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Number of samples per channel (M).
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    /// Number of channels (L).
    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Single channel as an owned frame.
    pub fn channel(&self, l: usize) -> Result<Self> {
        if l >= self.n_channels() {
            return Err(StcsError::InvalidDimension(format!(
                "channel {} out of range (frame has {})",
                l,
                self.n_channels()
            )));
        }
        Self::new(DMatrix::from_columns(&[self.values.column(l)]))
    }

    /// Write the frame as CSV with a `# key=value,...` metadata header.
    /// `M` and `L` are always included; extra pairs are appended in order.
    pub fn write_csv(&self, path: &Path, extra: &[(&str, String)]) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = format!("# M={},L={}", self.n_samples(), self.n_channels());
        for (k, v) in extra {
            header.push_str(&format!(",{}={}", k, v));
        }
        writeln!(file, "{}", header)?;
        for r in 0..self.n_samples() {
            let row: Vec<String> = (0..self.n_channels())
                .map(|c| format!("{:.17e}", self.values[(r, c)]))
                .collect();
            writeln!(file, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Read a CSV frame, returning the frame and any `# key=value` metadata.
    /// Files without a header line are accepted; dimensions then come from
    /// the data itself.
    pub fn read_csv(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut metadata = BTreeMap::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (idx, line) in file.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                for pair in rest.split(',') {
                    if let Some((k, v)) = pair.split_once('=') {
                        metadata.insert(k.trim().to_string(), v.trim().to_string());
                    }
                }
                continue;
            }
            let row: Vec<f64> = trimmed
                .split(',')
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|e| {
                        StcsError::Parse(format!(
                            "{}:{}: bad number {:?}: {}",
                            path.display(),
                            idx + 1,
                            cell,
                            e
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(StcsError::Parse(format!(
                        "{}:{}: expected {} columns, got {}",
                        path.display(),
                        idx + 1,
                        w,
                        row.len()
                    )));
                }
                _ => {}
            }
            rows.push(row);
        }
        let n_rows = rows.len();
        let n_cols = width.unwrap_or(0);
        if n_rows == 0 || n_cols == 0 {
            return Err(StcsError::Parse(format!(
                "{}: no data rows",
                path.display()
            )));
        }
        let values = DMatrix::from_fn(n_rows, n_cols, |r, c| rows[r][c]);
        Ok((Self::new(values)?, metadata))
    }
}
