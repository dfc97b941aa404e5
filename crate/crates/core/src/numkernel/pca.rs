use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::design::{mean, ColumnKind, ColumnLabel, DesignMatrix};
use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are exact-zero directions.
const NULL_EIGEN_REL: f64 = 1e-12;

/// A fitted principal-component reduction, reusable on resampled rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaTransform {
    /// Names of the input columns the transform reads, in order.
    pub inputs: Vec<String>,
    pub means: Vec<f64>,
    /// Column scale divisors (all 1 when not standardizing).
    pub scales: Vec<f64>,
    /// p x k loadings, row-major by input column.
    pub loadings: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    pub dropped_variances: Vec<f64>,
}

impl PcaTransform {
    pub fn n_components(&self) -> usize {
        self.variances.len()
    }

    /// Scores of the retained components for the rows of `a`.
    pub fn apply(&self, a: &DesignMatrix) -> Result<DesignMatrix> {
        let cols: Vec<&[f64]> = self
            .inputs
            .iter()
            .map(|name| {
                a.position(name)
                    .map(|j| a.column(j))
                    .ok_or_else(|| Error::structural(format!("PCA input column '{name}' missing")))
            })
            .collect::<Result<_>>()?;
        let n = a.nrows();
        let k = self.n_components();
        let mut out = Vec::with_capacity(k);
        for c in 0..k {
            let mut s = vec![0.0; n];
            for (j, col) in cols.iter().enumerate() {
                let w = self.loadings[j][c] / self.scales[j];
                let m = self.means[j];
                for (si, x) in s.iter_mut().zip(col.iter()) {
                    *si += (x - m) * w;
                }
            }
            out.push((ColumnLabel::new(format!("pc{}", c + 1), ColumnKind::Derived), s));
        }
        DesignMatrix::from_columns(out)
    }
}

/// Principal components of the non-constant columns of `a`, keeping components
/// whose sample variance is at least `variance_ratio` times the largest.
///
/// With `standardize`, columns are scaled to unit sample variance first.
pub fn pca_filter(
    a: &DesignMatrix,
    variance_ratio: f64,
    standardize: bool,
) -> Result<(DesignMatrix, PcaTransform)> {
    if !(variance_ratio > 0.0 && variance_ratio < 1.0) {
        return Err(Error::invalid("variance ratio must lie in (0, 1)"));
    }
    let n = a.nrows();
    if n < 2 {
        return Err(Error::structural("PCA needs at least two rows"));
    }
    let mut inputs = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for (j, col) in a.columns().enumerate() {
        let m = mean(col);
        let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        if a.label(j).kind == ColumnKind::Constant || var <= 0.0 {
            continue;
        }
        inputs.push(a.label(j).name.clone());
        means.push(m);
        scales.push(if standardize { var.sqrt() } else { 1.0 });
    }
    if inputs.is_empty() {
        return Err(Error::invalid("PCA input has no non-constant columns"));
    }
    let p = inputs.len();
    let centered: Vec<Vec<f64>> = inputs
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = a.column(a.position(name).expect("present"));
            col.iter().map(|x| (x - means[j]) / scales[j]).collect()
        })
        .collect();
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let s = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / (n - 1) as f64;
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut loadings = vec![Vec::new(); p];
    let mut variances = Vec::new();
    let mut dropped_variances = Vec::new();
    for &c in &order {
        let lam = eig.eigenvalues[c];
        let keep = lam > NULL_EIGEN_REL * top && lam >= variance_ratio * top;
        if !keep {
            dropped_variances.push(lam.max(0.0));
            continue;
        }
        let v = eig.eigenvectors.column(c);
        // Sign convention: largest-magnitude loading positive (first on ties).
        let mut lead = 0;
        for r in 1..p {
            if v[r].abs() > v[lead].abs() {
                lead = r;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..p {
            loadings[r].push(sign * v[r]);
        }
        variances.push(lam);
    }
    let transform = PcaTransform {
        inputs,
        means,
        scales,
        loadings,
        variances,
        dropped_variances,
    };
    let reduced = transform.apply(a)?;
    Ok((reduced, transform))
}
