//! Rank-revealing orthogonal factorization in column order, with the least-squares
//! solver and redundancy detector built on it.
//!
//! Columns are visited left to right. Each column is orthogonalized against the
//! columns already retained (classical Gram-Schmidt applied twice, which is
//! orthogonal to working precision). A column whose remaining norm falls below
//! `rel_tol` times its own norm is declared redundant and skipped, so among a set
//! of linearly dependent columns the earliest ones are always kept.

use nalgebra::{DMatrix, DVector};

use super::design::{dot, DesignMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Thin factorization `A[:, retained] = Q R` with `R` upper triangular.
#[derive(Debug, Clone)]
pub struct OrderedQr {
    q: Vec<Vec<f64>>,
    r: DMatrix<f64>,
    retained: Vec<usize>,
    dropped: Vec<usize>,
    /// |R_jj| for each retained column.
    pivots: Vec<f64>,
}

impl OrderedQr {
    pub fn factor<'a, I>(columns: I, n: usize, rel_tol: f64) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut q: Vec<Vec<f64>> = Vec::new();
        let mut r_cols: Vec<Vec<f64>> = Vec::new();
        let mut retained = Vec::new();
        let mut dropped = Vec::new();
        let mut pivots = Vec::new();

        for (j, col) in columns.into_iter().enumerate() {
            debug_assert_eq!(col.len(), n);
            let norm0 = dot(col, col).sqrt();
            let mut v = col.to_vec();
            let mut coef = vec![0.0; q.len()];
            for _pass in 0..2 {
                for (k, qk) in q.iter().enumerate() {
                    let c = dot(qk, &v);
                    coef[k] += c;
                    for (vi, qi) in v.iter_mut().zip(qk) {
                        *vi -= c * qi;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm0 == 0.0 || !norm0.is_finite() || norm <= rel_tol * norm0 {
                dropped.push(j);
                continue;
            }
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            coef.push(norm);
            r_cols.push(coef);
            q.push(v);
            retained.push(j);
            pivots.push(norm);
        }

        let k = q.len();
        let mut r = DMatrix::zeros(k, k);
        for (j, c) in r_cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                r[(i, j)] = *v;
            }
        }
        Self {
            q,
            r,
            retained,
            dropped,
            pivots,
        }
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn rank(&self) -> usize {
        self.retained.len()
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    /// Least-squares coefficients on the retained columns.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let qtb = DVector::from_iterator(k, self.q.iter().map(|qk| dot(qk, b)));
        // R is upper triangular with strictly positive diagonal.
        let x = self
            .r
            .solve_upper_triangular(&qtb)
            .expect("retained pivots are nonzero");
        x.iter().copied().collect()
    }

    /// Orthogonal projection of `b` onto the span of the retained columns.
    pub fn project(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; b.len()];
        for qk in &self.q {
            let c = dot(qk, b);
            for (o, qi) in out.iter_mut().zip(qk) {
                *o += c * qi;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    /// One coefficient per input column; dropped columns get 0.
    pub coefficients: Vec<f64>,
    pub fitted_values: Vec<f64>,
    pub rank: usize,
    pub dropped_columns: Vec<String>,
    pub retained: Vec<usize>,
}

/// Least squares of `b` on the columns of `a`, eliminating rank-deficient columns.
pub fn solve_least_squares(a: &DesignMatrix, b: &[f64], rank_tol: f64) -> Result<LeastSquaresFit> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::structural("empty design matrix"));
    }
    if b.len() != a.nrows() {
        return Err(Error::structural(format!(
            "response has length {} but design has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::invalid("rank tolerance must be positive"));
    }
    let qr = OrderedQr::factor(a.columns(), a.nrows(), rank_tol);
    let mut coefficients = vec![0.0; a.ncols()];
    if qr.rank() > 0 {
        for (&j, c) in qr.retained().iter().zip(qr.solve(b)) {
            coefficients[j] = c;
        }
    }
    Ok(LeastSquaresFit {
        fitted_values: qr.project(b),
        coefficients,
        rank: qr.rank(),
        dropped_columns: qr
            .dropped()
            .iter()
            .map(|&j| a.label(j).name.clone())
            .collect(),
        retained: qr.retained().to_vec(),
    })
}

/// Indices of a maximal linearly independent set of columns, earliest columns first.
pub fn detect_redundancy(a: &DesignMatrix, rel_tol: f64) -> Vec<usize> {
    OrderedQr::factor(a.columns(), a.nrows(), rel_tol)
        .retained()
        .to_vec()
}

/// Same as [`detect_redundancy`] for raw column slices.
pub fn independent_columns(columns: &[Vec<f64>], rel_tol: f64) -> Vec<usize> {
    let n = columns.first().map_or(0, Vec::len);
    OrderedQr::factor(columns.iter().map(Vec::as_slice), n, rel_tol)
        .retained()
        .to_vec()
}

/// Solves the square system `m x = rhs`, falling back to the minimum-norm
/// least-squares solution when `m` is singular at tolerance. The flag reports
/// whether the fallback was used.
pub fn solve_or_min_norm(m: &DMatrix<f64>, rhs: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, bool) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax > 0.0 && smin > rel_tol * smax {
        if let Some(x) = m.clone().lu().solve(rhs) {
            return (x, false);
        }
    }
    let eps = rel_tol * smax.max(f64::MIN_POSITIVE);
    let x = svd
        .solve(rhs, eps)
        .unwrap_or_else(|_| DVector::zeros(m.ncols()));
    (x, true)
}
