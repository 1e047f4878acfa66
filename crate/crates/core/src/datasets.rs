//! Loading and validating data matrices and ground-truth labels.
//!
//! Matrices are delimiter-separated text with one sample per row and one
//! feature per column. Labels are arbitrary strings mapped to dense ids in
//! first-appearance order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// An `n x d` matrix of finite values, rows are samples and columns features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    feature_names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        if n < 2 || d < 2 {
            return Err(Error::Dimension(format!(
                "need at least 2 samples and 2 features, got {n}x{d}"
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::DegenerateData(format!(
                "non-finite value {v} at sample {i}, feature {j}"
            )));
        }
        Ok(Self {
            values,
            feature_names: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Parse {
                line: i as u64 + 1,
                message: format!("expected {d} fields, found {}", rows[i].len()),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values =
            Array2::from_shape_vec((n, d), flat).map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(values)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::LengthMismatch {
                what: "feature names",
                expected: self.d(),
                actual: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn feature(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Copy of the matrix restricted to `columns`, in the given order.
    ///
    /// Unlike [`DataMatrix::new`] this accepts a single column, since
    /// clustering on one selected feature is legitimate.
    pub fn select_columns(&self, columns: &[usize]) -> Array2<f64> {
        self.values.select(Axis(1), columns)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.values * factor)
    }
}

/// Ground-truth class assignment for each sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    ids: Vec<usize>,
    classes: Vec<String>,
}

impl LabelVector {
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::DegenerateData("label list is empty".into()));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut classes = Vec::new();
        let ids = names
            .iter()
            .map(|name| {
                let name = name.as_ref();
                *index.entry(name).or_insert_with(|| {
                    classes.push(name.to_string());
                    classes.len() - 1
                })
            })
            .collect();
        let labels = Self { ids, classes };
        if labels.c() < 2 {
            return Err(Error::DegenerateData(
                "labels must contain at least 2 distinct classes".into(),
            ));
        }
        Ok(labels)
    }

    pub fn from_ids(ids: &[usize]) -> Result<Self> {
        let names: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        Self::from_names(&names)
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of distinct classes.
    pub fn c(&self) -> usize {
        self.classes.len()
    }

    pub fn check_pairs_with(&self, matrix: &DataMatrix) -> Result<()> {
        if self.len() != matrix.n() {
            return Err(Error::LengthMismatch {
                what: "labels vs samples",
                expected: matrix.n(),
                actual: self.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub label_column: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            label_column: None,
        }
    }
}

pub fn load_matrix(
    path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<(DataMatrix, Option<LabelVector>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, options)
}

pub fn parse_matrix(
    text: &str,
    options: &LoadOptions,
) -> Result<(DataMatrix, Option<LabelVector>)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());

    let header: Option<Vec<String>> = if options.has_header {
        let h = reader.headers().map_err(csv_error)?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if let Some(col) = options.label_column {
            if col >= record.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("label column {col} out of range ({} fields)", record.len()),
                });
            }
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            if Some(j) == options.label_column {
                labels.push(field.to_string());
                continue;
            }
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value {field:?} in column {j}"),
            })?;
            row.push(value);
        }
        rows.push(row);
    }

    let mut matrix = DataMatrix::from_rows(&rows)?;
    if let Some(mut names) = header {
        if let Some(col) = options.label_column {
            if col < names.len() {
                names.remove(col);
            }
        }
        matrix = matrix.with_feature_names(names)?;
    }
    let labels = match options.label_column {
        Some(_) => Some(LabelVector::from_names(&labels)?),
        None => None,
    };
    Ok((matrix, labels))
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    let message = match err.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("ragged row: expected {expected_len} fields, found {len}"),
        _ => err.to_string(),
    };
    Error::Parse { line, message }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<LabelVector> {
    let names: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    LabelVector::from_names(&names)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSummary {
    pub n: usize,
    pub d: usize,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub means: Vec<f64>,
}

pub fn describe(matrix: &DataMatrix) -> MatrixSummary {
    let view = matrix.view();
    let mut mins = Vec::with_capacity(matrix.d());
    let mut maxs = Vec::with_capacity(matrix.d());
    let mut means = Vec::with_capacity(matrix.d());
    for col in view.columns() {
        mins.push(col.fold(f64::INFINITY, |a, &b| a.min(b)));
        maxs.push(col.fold(f64::NEG_INFINITY, |a, &b| a.max(b)));
        means.push(col.sum() / col.len() as f64);
    }
    MatrixSummary {
        n: matrix.n(),
        d: matrix.d(),
        mins,
        maxs,
        means,
    }
}
