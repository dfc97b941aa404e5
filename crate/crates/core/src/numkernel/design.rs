use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a design column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Constant,
    Covariate,
    Transform,
    /// A fitted regression function such as an outcome-model prediction.
    Fitted,
    /// Anything computed from other columns (principal component scores, weighted products).
    Derived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnLabel {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Dense n x p matrix of named columns.
///
/// Column-major storage, so each column is a contiguous slice.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    data: DMatrix<f64>,
    labels: Vec<ColumnLabel>,
}

impl DesignMatrix {
    pub fn from_columns(columns: Vec<(ColumnLabel, Vec<f64>)>) -> Result<Self> {
        let n = columns
            .first()
            .map(|(_, c)| c.len())
            .ok_or_else(|| Error::structural("design matrix has no columns"))?;
        if n == 0 {
            return Err(Error::structural("design matrix has no rows"));
        }
        let mut labels = Vec::with_capacity(columns.len());
        let mut flat = Vec::with_capacity(n * columns.len());
        for (label, col) in columns {
            if col.len() != n {
                return Err(Error::structural(format!(
                    "column '{}' has length {} but expected {}",
                    label.name,
                    col.len(),
                    n
                )));
            }
            if labels.iter().any(|l: &ColumnLabel| l.name == label.name) {
                return Err(Error::structural(format!(
                    "duplicate column label '{}'",
                    label.name
                )));
            }
            labels.push(label);
            flat.extend(col);
        }
        let p = labels.len();
        Ok(Self {
            data: DMatrix::from_vec(n, p, flat),
            labels,
        })
    }

    /// Builds a matrix from unnamed columns, labelling them `c0, c1, ...`.
    pub fn from_unnamed(columns: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_columns(
            columns
                .into_iter()
                .enumerate()
                .map(|(j, c)| (ColumnLabel::new(format!("c{j}"), ColumnKind::Derived), c))
                .collect(),
        )
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.nrows();
        &self.data.as_slice()[j * n..(j + 1) * n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.ncols()).map(move |j| self.column(j))
    }

    pub fn labels(&self) -> &[ColumnLabel] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> &ColumnLabel {
        &self.labels[j]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.name == name)
    }

    /// Sub-matrix of the given columns, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::structural("selection keeps no columns"));
        }
        Self::from_columns(
            indices
                .iter()
                .map(|&j| (self.labels[j].clone(), self.column(j).to_vec()))
                .collect(),
        )
    }

    /// Sub-matrix of the given rows (rows may repeat).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::from_columns(
            (0..self.ncols())
                .map(|j| {
                    let c = self.column(j);
                    (self.labels[j].clone(), rows.iter().map(|&i| c[i]).collect())
                })
                .collect(),
        )
    }

    /// Appends columns on the right.
    pub fn with_columns(&self, extra: Vec<(ColumnLabel, Vec<f64>)>) -> Result<Self> {
        let mut cols: Vec<(ColumnLabel, Vec<f64>)> = (0..self.ncols())
            .map(|j| (self.labels[j].clone(), self.column(j).to_vec()))
            .collect();
        cols.extend(extra);
        Self::from_columns(cols)
    }

    /// Row-wise linear combination `A * coef`.
    pub fn mul_vec(&self, coef: &[f64]) -> Vec<f64> {
        assert_eq!(coef.len(), self.ncols(), "coefficient length mismatch");
        let mut out = vec![0.0; self.nrows()];
        for (c, col) in coef.iter().zip(self.columns()) {
            if *c != 0.0 {
                for (o, a) in out.iter_mut().zip(col) {
                    *o += c * a;
                }
            }
        }
        out
    }
}

/// Sample average.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn rms(v: &[f64]) -> f64 {
    (dot(v, v) / v.len() as f64).sqrt()
}
