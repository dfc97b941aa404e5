use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basic::tau0;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numkernel::{solve_or_min_norm, DesignMatrix, DEFAULT_RANK_TOL};

/// Efficient influence functions for `nu^0` (suffix 0) and `nu^1` (suffix 1):
/// nonparametric, known propensity (`SpStar`), parametric propensity (`Sp`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfluenceKind {
    Np0,
    SpStar0,
    Sp0,
    Np1,
    SpStar1,
    Sp1,
}

impl InfluenceKind {
    fn arm(self) -> u8 {
        match self {
            InfluenceKind::Np0 | InfluenceKind::SpStar0 | InfluenceKind::Sp0 => 0,
            _ => 1,
        }
    }
}

/// Linear projection `cov(z2, Z1) var(Z1)^-1 Z1` from sample moments.
/// Returns the projected values and whether the score variance was singular.
pub fn project_on_scores(z2: &[f64], scores: &[Vec<f64>]) -> (Vec<f64>, bool) {
    let n = z2.len();
    let k = scores.len();
    let nf = n as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / nf;
    let m2 = mean(z2);
    let m1: Vec<f64> = scores.iter().map(|s| mean(s)).collect();
    let var = DMatrix::from_fn(k, k, |a, b| {
        (0..n)
            .map(|i| (scores[a][i] - m1[a]) * (scores[b][i] - m1[b]))
            .sum::<f64>()
            / nf
    });
    let cov = DVector::from_fn(k, |a, _| {
        (0..n).map(|i| (scores[a][i] - m1[a]) * (z2[i] - m2)).sum::<f64>() / nf
    });
    let (coef, singular) = solve_or_min_norm(&var, &cov, DEFAULT_RANK_TOL);
    let proj = (0..n)
        .map(|i| scores.iter().zip(coef.iter()).map(|(s, c)| s[i] * c).sum())
        .collect();
    (proj, singular)
}

/// Row values of the chosen influence function at fitted `(pi, m_t, nu_t)`, with
/// `q = E~(T)` and the logistic score `(T - pi) f(X)` for the projection.
pub fn influence_values(
    data: &Dataset,
    pi: &[f64],
    m_t: &[f64],
    nu_hat: f64,
    f: &DesignMatrix,
    which: InfluenceKind,
) -> Result<(Vec<f64>, bool)> {
    let n = data.len();
    if pi.len() != n || m_t.len() != n || f.nrows() != n {
        return Err(Error::structural("influence inputs differ in length"));
    }
    let t = data.t();
    let y = data.y();
    let q = data.treated_share();
    if q == 0.0 {
        return Err(Error::invalid("no treated rows"));
    }
    let np: Vec<f64> = if which.arm() == 0 {
        let tau = tau0(pi, m_t, data)?;
        (0..n).map(|i| (tau[i] - t[i] * nu_hat) / q).collect()
    } else {
        (0..n).map(|i| (t[i] * y[i] - t[i] * nu_hat) / q).collect()
    };
    let z2: Vec<f64> = (0..n).map(|i| (t[i] - pi[i]) * (m_t[i] - nu_hat) / q).collect();
    match which {
        InfluenceKind::Np0 | InfluenceKind::Np1 => Ok((np, false)),
        InfluenceKind::SpStar0 | InfluenceKind::SpStar1 => {
            Ok(((0..n).map(|i| np[i] - z2[i]).collect(), false))
        }
        InfluenceKind::Sp0 | InfluenceKind::Sp1 => {
            let scores: Vec<Vec<f64>> = f
                .columns()
                .map(|c| (0..n).map(|i| (t[i] - pi[i]) * c[i]).collect())
                .collect();
            let (proj, singular) = project_on_scores(&z2, &scores);
            Ok(((0..n).map(|i| np[i] - z2[i] + proj[i]).collect(), singular))
        }
    }
}

/// Sample variance of the influence values divided by n.
pub fn influence_variance(
    data: &Dataset,
    pi: &[f64],
    m_t: &[f64],
    nu_hat: f64,
    f: &DesignMatrix,
    which: InfluenceKind,
) -> Result<f64> {
    let (v, _) = influence_values(data, pi, m_t, nu_hat, f, which)?;
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Ok(v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n / n)
}
