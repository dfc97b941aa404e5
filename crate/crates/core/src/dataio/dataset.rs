use std::sync::Arc;

use crate::error::{Error, Result};

/// Observations `(Y, T, X)` with named covariate columns.
///
/// Treatment is stored as `0.0` / `1.0` so that it enters sample averages directly.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    provenance: Vec<Arc<str>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, t: Vec<f64>, covariates: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = y.len();
        let tag: Arc<str> = Arc::from("data");
        Self::with_provenance(y, t, covariates, vec![tag; n])
    }

    pub fn with_provenance(
        y: Vec<f64>,
        t: Vec<f64>,
        covariates: Vec<(String, Vec<f64>)>,
        provenance: Vec<Arc<str>>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::structural("dataset has no rows"));
        }
        if t.len() != n || provenance.len() != n {
            return Err(Error::structural("outcome, treatment and provenance lengths differ"));
        }
        for (i, v) in t.iter().enumerate() {
            if *v != 0.0 && *v != 1.0 {
                return Err(Error::Data {
                    row: i,
                    message: format!("treatment must be 0 or 1, found {v}"),
                });
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "outcome".into(),
                row: i,
            });
        }
        let mut names = Vec::with_capacity(covariates.len());
        let mut columns = Vec::with_capacity(covariates.len());
        for (name, col) in covariates {
            if col.len() != n {
                return Err(Error::structural(format!(
                    "covariate '{name}' has length {} but expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: name, row: i });
            }
            if names.contains(&name) {
                return Err(Error::structural(format!("duplicate covariate '{name}'")));
            }
            names.push(name);
            columns.push(col);
        }
        Ok(Self {
            y,
            t,
            names,
            columns,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|v| **v == 1.0).count()
    }

    pub fn n_untreated(&self) -> usize {
        self.len() - self.n_treated()
    }

    /// Sample average of T.
    pub fn treated_share(&self) -> f64 {
        self.n_treated() as f64 / self.len() as f64
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.names
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    pub fn covariates(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.columns.iter().map(Vec::as_slice))
    }

    /// Covariate values of row `i`, in column order.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn provenance(&self) -> &[Arc<str>] {
        &self.provenance
    }

    /// Row indices with `T == arm`.
    pub fn arm_rows(&self, arm: u8) -> Vec<usize> {
        let a = f64::from(arm);
        (0..self.len()).filter(|&i| self.t[i] == a).collect()
    }

    /// Outcome range over rows with `T == arm`.
    pub fn arm_range(&self, arm: u8) -> Option<(f64, f64)> {
        let rows = self.arm_rows(arm);
        if rows.is_empty() {
            return None;
        }
        Some(rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(self.y[i]), hi.max(self.y[i]))
        }))
    }

    /// New dataset made of the given rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self::with_provenance(
            pick(&self.y),
            pick(&self.t),
            self.names
                .iter()
                .cloned()
                .zip(self.columns.iter().map(|c| pick(c)))
                .collect(),
            rows.iter().map(|&i| self.provenance[i].clone()).collect(),
        )
    }

    /// Same covariates and provenance with the outcome replaced.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_provenance(
            y,
            self.t.clone(),
            self.names.iter().cloned().zip(self.columns.iter().cloned()).collect(),
            self.provenance.clone(),
        )
    }

    /// Same rows with the treatment vector replaced.
    pub fn with_treatment(&self, t: Vec<f64>) -> Result<Self> {
        Self::with_provenance(
            self.y.clone(),
            t,
            self.names.iter().cloned().zip(self.columns.iter().cloned()).collect(),
            self.provenance.clone(),
        )
    }

    /// Same rows with extra covariate columns appended.
    pub fn with_covariates(&self, extra: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut covs: Vec<(String, Vec<f64>)> =
            self.names.iter().cloned().zip(self.columns.iter().cloned()).collect();
        covs.extend(extra);
        Self::with_provenance(self.y.clone(), self.t.clone(), covs, self.provenance.clone())
    }

    pub fn with_provenance_tag(mut self, tag: &str) -> Self {
        let tag: Arc<str> = Arc::from(tag);
        self.provenance = vec![tag; self.len()];
        self
    }
}
