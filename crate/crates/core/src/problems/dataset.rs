use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{IfsError, Result};

/// Feature rows `a_i` with targets `y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<DVector<f64>>,
    targets: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<DVector<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(IfsError::InvalidArgument("dataset must have at least one row".into()));
        }
        if rows.len() != targets.len() {
            return Err(IfsError::InvalidArgument(format!(
                "{} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(IfsError::InvalidArgument("feature dimension must be >= 1".into()));
        }
        for (i, (a, y)) in rows.iter().zip(&targets).enumerate() {
            if a.len() != dim {
                return Err(IfsError::MalformedRow {
                    row: i,
                    message: format!("expected {dim} features, got {}", a.len()),
                });
            }
            if !y.is_finite() || a.iter().any(|x| !x.is_finite()) {
                return Err(IfsError::MalformedRow { row: i, message: "non-finite entry".into() });
            }
        }
        Ok(Self { rows, targets, dim })
    }

    /// Convenience constructor from nested slices.
    pub fn from_rows(rows: &[&[f64]], targets: &[f64]) -> Result<Self> {
        Self::new(
            rows.iter().map(|r| DVector::from_column_slice(r)).collect(),
            targets.to_vec(),
        )
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.dim
    }

    pub fn features(&self, i: usize) -> &DVector<f64> {
        &self.rows[i]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `R = max_i ||a_i||`.
    pub fn radius(&self) -> f64 {
        self.rows.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// `R_i = max_{j in batch} ||a_j||`.
    pub fn batch_radius(&self, batch: &[usize]) -> f64 {
        batch.iter().map(|&j| self.rows[j].norm()).fold(0.0, f64::max)
    }

    /// Checks that every target is a ±1 class label.
    pub fn validate_labels(&self) -> Result<()> {
        for (i, y) in self.targets.iter().enumerate() {
            if *y != 1.0 && *y != -1.0 {
                return Err(IfsError::MalformedRow {
                    row: i,
                    message: format!("classification label must be ±1, got {y}"),
                });
            }
        }
        Ok(())
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.rows[i].clone()).collect(),
            idx.iter().map(|&i| self.targets[i]).collect(),
        )
    }

    /// Parses CSV with header `x0,..,x{d-1},y` (column order free, names fixed).
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(h) => h?,
            None => return Err(IfsError::MalformedRow { row: 0, message: "empty file".into() }),
        };
        let names: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
        let y_col = names
            .iter()
            .position(|&c| c == "y")
            .ok_or_else(|| IfsError::MalformedRow { row: 0, message: "missing `y` column".into() })?;
        let d = names.len() - 1;
        let mut x_cols = vec![usize::MAX; d];
        for (col, name) in names.iter().enumerate() {
            if col == y_col {
                continue;
            }
            let k: usize = name
                .strip_prefix('x')
                .and_then(|s| s.parse().ok())
                .filter(|&k: &usize| k < d)
                .ok_or_else(|| IfsError::MalformedRow {
                    row: 0,
                    message: format!("unexpected column `{name}`"),
                })?;
            if x_cols[k] != usize::MAX {
                return Err(IfsError::MalformedRow { row: 0, message: format!("duplicate column `{name}`") });
            }
            x_cols[k] = col;
        }

        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let row_no = lineno + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != names.len() {
                return Err(IfsError::MalformedRow {
                    row: row_no,
                    message: format!("expected {} fields, got {}", names.len(), fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IfsError::MalformedRow { row: row_no, message: format!("bad number `{s}`") })
            };
            let a: Result<Vec<f64>> = x_cols.iter().map(|&c| parse(fields[c])).collect();
            rows.push(DVector::from_vec(a?));
            targets.push(parse(fields[y_col])?);
        }
        Self::new(rows, targets)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Writes the CSV layout accepted by [`Dataset::read_csv`].
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        header.push("y".into());
        writeln!(out, "{}", header.join(","))?;
        for (a, y) in self.rows.iter().zip(&self.targets) {
            let mut fields: Vec<String> = a.iter().map(|v| format!("{v:.16e}")).collect();
            fields.push(format!("{y:.16e}"));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}
