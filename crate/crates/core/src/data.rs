//! Datasets, CSV ingestion and column standardization.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IpadError, Result};

/// Response vector plus covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
    pub response_name: String,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        column_names: Vec<String>,
        response_name: impl Into<String>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(invalid(format!("dataset needs at least 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(invalid("dataset needs at least one covariate"));
        }
        if y.len() != n {
            return Err(IpadError::DimensionMismatch {
                context: "response length",
                expected: n,
                found: y.len(),
            });
        }
        if column_names.len() != p {
            return Err(IpadError::DimensionMismatch {
                context: "column names",
                expected: p,
                found: column_names.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(IpadError::NonFinite("dataset"));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(invalid(format!("duplicate column name '{name}'")));
            }
        }
        Ok(Self {
            x,
            y,
            column_names,
            response_name: response_name.into(),
        })
    }

    /// Builds a dataset with generated names `x1..xp`.
    pub fn from_matrix(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names, "y")
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Writes the response followed by the covariates, 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| IpadError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        let mut header = vec![self.response_name.clone()];
        header.extend(self.column_names.iter().cloned());
        writeln!(out, "{}", header.join(",")).map_err(io_err)?;
        for i in 0..self.n() {
            let mut fields = vec![format_exact(self.y[i])];
            fields.extend(self.x.row(i).iter().map(|v| format_exact(*v)));
            writeln!(out, "{}", fields.join(",")).map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn format_exact(v: f64) -> String {
    format!("{v:.16e}")
}

/// Which file column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    /// Zero-based index among the file's columns, date column included.
    Index(usize),
}

impl From<&str> for ResponseColumn {
    fn from(s: &str) -> Self {
        ResponseColumn::Name(s.to_string())
    }
}

impl From<usize> for ResponseColumn {
    fn from(i: usize) -> Self {
        ResponseColumn::Index(i)
    }
}

/// Parsed numeric table: file order is preserved, an optional leading date
/// column is split off.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub dates: Option<Vec<String>>,
    pub names: Vec<String>,
    /// Row-major values, one inner vector per data row.
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r[j]))
    }

    pub fn matrix(&self, columns: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), columns.len(), |i, k| {
            self.rows[i][columns[k]]
        })
    }
}

fn parse_finite(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a comma-separated numeric table.
///
/// The first column is treated as a date label when its header is `date`
/// (any case) or its first data cell is not a number. Row numbers in errors
/// count data rows from 1, header excluded.
pub fn read_numeric_table(path: &Path, has_header: bool) -> Result<NumericTable> {
    let file = File::open(path).map_err(|source| IpadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = reader.records();

    let header: Option<Vec<String>> = if has_header {
        match records.next() {
            Some(rec) => Some(rec?.iter().map(|s| s.trim().to_string()).collect()),
            None => return Err(invalid("csv file is empty")),
        }
    } else {
        None
    };

    let mut raw: Vec<Vec<String>> = Vec::new();
    for rec in records {
        let rec = rec?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        raw.push(rec.iter().map(|s| s.to_string()).collect());
    }
    if raw.is_empty() {
        return Err(invalid("csv file has no data rows"));
    }

    let width = header.as_ref().map_or(raw[0].len(), |h| h.len());
    for (i, row) in raw.iter().enumerate() {
        if row.len() != width {
            return Err(IpadError::RaggedRow {
                row: i + 1,
                expected: width,
                found: row.len(),
            });
        }
    }

    let names_all: Vec<String> = match &header {
        Some(h) => h.clone(),
        None => (0..width).map(|j| format!("c{j}")).collect(),
    };
    let first_is_date = header
        .as_ref()
        .is_some_and(|h| h[0].eq_ignore_ascii_case("date"))
        || parse_finite(&raw[0][0]).is_none() && !raw[0][0].trim().is_empty();
    let offset = usize::from(first_is_date);
    if offset >= width {
        return Err(invalid("csv file has no numeric columns"));
    }

    let mut rows = Vec::with_capacity(raw.len());
    for (i, row) in raw.iter().enumerate() {
        let mut values = Vec::with_capacity(width - offset);
        for j in offset..width {
            let v = parse_finite(&row[j]).ok_or_else(|| IpadError::NonNumeric {
                row: i + 1,
                column: names_all[j].clone(),
                value: row[j].clone(),
            })?;
            values.push(v);
        }
        rows.push(values);
    }
    let dates = first_is_date.then(|| raw.iter().map(|r| r[0].trim().to_string()).collect());
    Ok(NumericTable {
        dates,
        names: names_all[offset..].to_vec(),
        rows,
    })
}

/// Loads a dataset: `y` from the response column, `x` from the remaining
/// numeric columns in file order.
pub fn load_csv(
    path: &Path,
    has_header: bool,
    response: impl Into<ResponseColumn>,
) -> Result<Dataset> {
    let table = read_numeric_table(path, has_header)?;
    let offset = usize::from(table.dates.is_some());
    let response = response.into();
    let target = match &response {
        ResponseColumn::Name(name) => table.names.iter().position(|c| c == name),
        ResponseColumn::Index(i) => i.checked_sub(offset).filter(|&k| k < table.ncols()),
    }
    .ok_or_else(|| {
        IpadError::MissingColumn(match &response {
            ResponseColumn::Name(name) => format!("'{name}'"),
            ResponseColumn::Index(i) => format!("#{i}"),
        })
    })?;
    let columns: Vec<usize> = (0..table.ncols()).filter(|&j| j != target).collect();
    let x = table.matrix(&columns);
    let y = table.column(target);
    let names = columns.iter().map(|&j| table.names[j].clone()).collect();
    Dataset::new(x, y, names, table.names[target].clone())
}

/// Everything needed to undo [`standardize`], [`rescale_columns`] or
/// [`center_columns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub original_norms: Vec<f64>,
    pub centered: bool,
    /// Column means removed before rescaling; empty when not centered.
    pub column_means: Vec<f64>,
    pub response_mean: f64,
}

impl StandardizationRecord {
    /// Maps a standardized dataset back to the original units.
    pub fn restore(&self, d: &Dataset) -> Result<Dataset> {
        if self.original_norms.len() != d.p() {
            return Err(IpadError::DimensionMismatch {
                context: "standardization record",
                expected: self.original_norms.len(),
                found: d.p(),
            });
        }
        let mut x = d.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= self.original_norms[j];
            if self.centered {
                col.add_scalar_mut(self.column_means[j]);
            }
        }
        let mut y = d.y.clone();
        if self.centered {
            y.add_scalar_mut(self.response_mean);
        }
        Dataset::new(x, y, d.column_names.clone(), d.response_name.clone())
    }
}

/// Scales every column of `x` to unit Euclidean norm.
pub fn rescale_columns(d: &Dataset) -> Result<(Dataset, StandardizationRecord)> {
    let mut x = d.x.clone();
    let norms = unit_norm_columns(&mut x)?;
    let out = Dataset {
        x,
        ..d.clone()
    };
    Ok((
        out,
        StandardizationRecord {
            original_norms: norms,
            centered: false,
            column_means: Vec::new(),
            response_mean: 0.0,
        },
    ))
}

/// In-place unit-norm rescaling; returns the original norms.
pub fn unit_norm_columns(x: &mut DMatrix<f64>) -> Result<Vec<f64>> {
    let mut norms = Vec::with_capacity(x.ncols());
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(IpadError::ZeroNormColumn { index: j });
        }
        col /= norm;
        norms.push(norm);
    }
    Ok(norms)
}

/// Subtracts column means from `x` and the mean from `y`.
pub fn center_columns(d: &Dataset) -> Dataset {
    let mut x = d.x.clone();
    center_matrix(&mut x);
    let mut y = d.y.clone();
    let ybar = y.mean();
    y.add_scalar_mut(-ybar);
    Dataset {
        x,
        y,
        ..d.clone()
    }
}

/// Centers each column in place, returning the removed means.
pub fn center_matrix(x: &mut DMatrix<f64>) -> Vec<f64> {
    x.column_iter_mut()
        .map(|mut col| {
            let m = col.mean();
            col.add_scalar_mut(-m);
            m
        })
        .collect()
}

/// Real-data preprocessing: center, then rescale to unit column norms.
pub fn standardize(d: &Dataset) -> Result<(Dataset, StandardizationRecord)> {
    let column_means: Vec<f64> = d.x.column_iter().map(|c| c.mean()).collect();
    let response_mean = d.y.mean();
    let centered = center_columns(d);
    let (scaled, record) = rescale_columns(&centered)?;
    Ok((
        scaled,
        StandardizationRecord {
            centered: true,
            column_means,
            response_mean,
            ..record
        },
    ))
}

/// Writes a bare matrix (no header) with 17 significant digits.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let io_err = |source| IpadError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format_exact(*v)).collect();
        writeln!(out, "{}", fields.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads a matrix written by [`write_matrix_csv`]. `ncols` is needed for
/// matrices with zero rows or columns, which serialize to an empty file.
pub fn read_matrix_csv(path: &Path, nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if nrows == 0 || ncols == 0 {
        return Ok(DMatrix::zeros(nrows, ncols));
    }
    let table = read_numeric_table(path, false)?;
    if table.rows.len() != nrows || table.ncols() != ncols {
        return Err(IpadError::DimensionMismatch {
            context: "matrix file",
            expected: nrows * ncols,
            found: table.rows.len() * table.ncols(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| table.rows[i][j]))
}
