use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::models::{AugVariant, AugmentedPsFit, OutcomeFit};
use crate::numkernel::{independent_columns, solve_or_min_norm, ColumnKind, DEFAULT_RANK_TOL};

/// Which part of `h~` a column belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HBlock {
    /// `(1 - pi~) v~_1`
    Treated,
    /// `pi~ v~_0`
    Untreated,
    /// `pi~ (1 - pi~) (m0_hat, f_(1))`
    Extra,
}

/// Control-variate basis `h~(X)` after redundancy elimination.
#[derive(Debug, Clone)]
pub struct TildeH {
    /// Retained columns, in construction order.
    pub columns: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub blocks: Vec<HBlock>,
    /// Names of candidate columns removed as linearly dependent on earlier ones.
    pub dropped: Vec<String>,
    /// `v~_0`, `v~_1` (all columns, before elimination).
    pub v0: Vec<Vec<f64>>,
    pub v1: Vec<Vec<f64>>,
}

impl TildeH {
    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// Indices of the retained columns of block `b`.
    pub fn block_indices(&self, b: HBlock) -> Vec<usize> {
        (0..self.blocks.len()).filter(|&j| self.blocks[j] == b).collect()
    }

    /// `sum_j lambda_j h~_j(X_i)`
    pub fn combine(&self, lambda: &[f64]) -> Vec<f64> {
        let n = self.columns.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| self.columns.iter().zip(lambda).map(|(c, l)| c[i] * l).sum())
            .collect()
    }
}

/// `eta~_t`, `xi~_1` (`xi~_0 = -xi~_1`) and `zeta~_t` evaluated row by row.
#[derive(Debug, Clone)]
pub struct ControlVariates {
    pub eta0: Vec<f64>,
    pub eta1: Vec<f64>,
    /// Columns of `xi~_1`.
    pub xi: Vec<Vec<f64>>,
    pub zeta0: Vec<Vec<f64>>,
    pub zeta1: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub t: Vec<f64>,
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
}

impl ControlVariates {
    pub fn xi0(&self) -> Vec<Vec<f64>> {
        self.xi.iter().map(|c| c.iter().map(|v| -v).collect()).collect()
    }

    fn eta_for(&self, y: &[f64], t: u8) -> Vec<f64> {
        (0..self.t.len())
            .map(|i| {
                if t == 1 {
                    self.t[i] * y[i]
                } else {
                    (1.0 - self.t[i]) * self.pi[i] * y[i] / (1.0 - self.pi[i])
                }
            })
            .collect()
    }
}

/// Builds `h~ = (h~_1, C h~_2)` and the control variates.
///
/// `include_h2 = false` keeps `h~_1` only. With `targets = Some((c0, c1))` the
/// vectors `v~_t` are `pi~ c_t` instead of `(pi~, pi~ m_t_hat)`.
pub fn build_tilde_h(
    aug: &AugmentedPsFit,
    or0: &OutcomeFit,
    or1: &OutcomeFit,
    data: &Dataset,
    include_h2: bool,
    targets: Option<(&[Vec<f64>], &[Vec<f64>])>,
) -> Result<(TildeH, ControlVariates)> {
    let n = data.len();
    let pi = &aug.tilde_pi;
    if pi.len() != n || or0.m_hat.len() != n || or1.m_hat.len() != n {
        return Err(Error::structural("fitted vectors and data differ in length"));
    }
    let scale = |a: &[f64], b: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..n).map(|i| a[i] * b(i)).collect() };
    let ones = vec![1.0; n];
    let (base0, base1, names0, names1): (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<String>, Vec<String>) = match targets {
        Some((c0, c1)) => (
            c0.to_vec(),
            c1.to_vec(),
            (0..c0.len()).map(|j| format!("c0[{j}]")).collect(),
            (0..c1.len()).map(|j| format!("c1[{j}]")).collect(),
        ),
        None => (
            vec![ones.clone(), or0.m_hat.clone()],
            vec![ones.clone(), or1.m_hat.clone()],
            vec!["1".into(), "m0_hat".into()],
            vec!["1".into(), "m1_hat".into()],
        ),
    };
    let v0: Vec<Vec<f64>> = base0.iter().map(|c| scale(c, &|i| pi[i])).collect();
    let v1: Vec<Vec<f64>> = base1.iter().map(|c| scale(c, &|i| pi[i])).collect();

    let mut cand: Vec<(String, HBlock, Vec<f64>)> = Vec::new();
    for (c, name) in v1.iter().zip(&names1) {
        cand.push((format!("(1-pi)pi*{name}"), HBlock::Treated, scale(c, &|i| 1.0 - pi[i])));
    }
    for (c, name) in v0.iter().zip(&names0) {
        cand.push((format!("pi^2*{name}"), HBlock::Untreated, scale(c, &|i| pi[i])));
    }
    if include_h2 {
        let pq = |i: usize| pi[i] * (1.0 - pi[i]);
        cand.push(("pi(1-pi)*m0_hat".into(), HBlock::Extra, scale(&or0.m_hat, &pq)));
        let f = &aug.f;
        match (&aug.rho, aug.variant) {
            (Some(rho), AugVariant::General) => {
                for (j, lab) in f.labels().iter().enumerate() {
                    let col = scale(f.column(j), &|i| rho[i] * pq(i));
                    cand.push((format!("pi(1-pi)*rho*{}", lab.name), HBlock::Extra, col));
                }
            }
            _ => {
                for (j, lab) in f.labels().iter().enumerate() {
                    if lab.kind != ColumnKind::Constant {
                        cand.push((format!("pi(1-pi)*{}", lab.name), HBlock::Extra, scale(f.column(j), &pq)));
                    }
                }
            }
        }
    }
    let all: Vec<Vec<f64>> = cand.iter().map(|c| c.2.clone()).collect();
    let keep = independent_columns(&all, DEFAULT_RANK_TOL);
    if keep.is_empty() {
        return Err(Error::structural("every control-variate column is degenerate"));
    }
    let mut th = TildeH {
        columns: Vec::with_capacity(keep.len()),
        names: Vec::with_capacity(keep.len()),
        blocks: Vec::with_capacity(keep.len()),
        dropped: Vec::new(),
        v0,
        v1,
    };
    for (j, (name, block, col)) in cand.into_iter().enumerate() {
        if keep.contains(&j) {
            th.columns.push(col);
            th.names.push(name);
            th.blocks.push(block);
        } else {
            th.dropped.push(name);
        }
    }

    let t = data.t();
    let y = data.y();
    let xi: Vec<Vec<f64>> = th
        .columns
        .iter()
        .map(|h| (0..n).map(|i| (t[i] - pi[i]) * h[i] / (pi[i] * (1.0 - pi[i]))).collect())
        .collect();
    let zeta1 = th
        .columns
        .iter()
        .map(|h| (0..n).map(|i| t[i] * h[i] / (pi[i] * (1.0 - pi[i]))).collect())
        .collect();
    let zeta0 = th
        .columns
        .iter()
        .map(|h| (0..n).map(|i| (1.0 - t[i]) * h[i] / ((1.0 - pi[i]) * pi[i])).collect())
        .collect();
    let mut cv = ControlVariates {
        eta0: Vec::new(),
        eta1: Vec::new(),
        xi,
        zeta0,
        zeta1,
        pi: pi.clone(),
        t: t.to_vec(),
        m0: or0.m_hat.clone(),
        m1: or1.m_hat.clone(),
    };
    cv.eta0 = cv.eta_for(y, 0);
    cv.eta1 = cv.eta_for(y, 1);
    Ok((th, cv))
}

/// Regression estimate of `nu^t` with the calibrated coefficient.
#[derive(Debug, Clone)]
pub struct RegEstimate {
    pub nu: f64,
    pub beta: Vec<f64>,
    /// `|numerator with Y := m_t_hat - E~(pi~ m_t_hat)|`
    pub calibration_residual: f64,
    /// The moment matrix was near-singular and a minimum-norm solution was used.
    pub singular: bool,
    /// Estimate with the non-calibrated coefficient `E~(xi xi')^-1 E~(xi eta)`.
    pub nu_uncalibrated: f64,
}

/// Singular-value cutoff for the moment matrices. They are products of two sets of
/// columns that already passed the redundancy check at `DEFAULT_RANK_TOL`, so their
/// conditioning can be close to its square.
const MOMENT_RANK_TOL: f64 = 1e-14;

fn moment(a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    let n = a.first().map_or(1, Vec::len) as f64;
    DMatrix::from_fn(a.len(), b.len(), |j, k| {
        a[j].iter().zip(&b[k]).map(|(x, y)| x * y).sum::<f64>() / n
    })
}

fn cross(a: &[Vec<f64>], v: &[f64]) -> DVector<f64> {
    let n = v.len() as f64;
    DVector::from_iterator(a.len(), a.iter().map(|c| c.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / n))
}

fn numerator(xi: &[Vec<f64>], eta: &[f64], beta: &DVector<f64>) -> f64 {
    let n = eta.len();
    (0..n)
        .map(|i| eta[i] - xi.iter().zip(beta.iter()).map(|(c, b)| c[i] * b).sum::<f64>())
        .sum::<f64>()
        / n as f64
}

/// `nu~_reg^t = E~(eta~_t - beta~_t' xi~_t) / E~(T)` with `beta~_t = E~(xi~ zeta~')^-1 E~(xi~ eta~)`.
pub fn nu_reg(cv: &ControlVariates, t: u8) -> Result<RegEstimate> {
    let q = cv.t.iter().sum::<f64>() / cv.t.len() as f64;
    if q == 0.0 {
        return Err(Error::invalid("no treated rows"));
    }
    let xi: Vec<Vec<f64>> = if t == 1 { cv.xi.clone() } else { cv.xi0() };
    let (eta, zeta, m) = if t == 1 {
        (&cv.eta1, &cv.zeta1, &cv.m1)
    } else {
        (&cv.eta0, &cv.zeta0, &cv.m0)
    };
    let a = moment(&xi, zeta);
    let (beta, fallback) = solve_or_min_norm(&a, &cross(&xi, eta), MOMENT_RANK_TOL);
    let nu = numerator(&xi, eta, &beta) / q;

    let eta_m = cv.eta_for(m, t);
    let (beta_m, _) = solve_or_min_norm(&a, &cross(&xi, &eta_m), MOMENT_RANK_TOL);
    let target = cv.pi.iter().zip(m).map(|(p, v)| p * v).sum::<f64>() / m.len() as f64;
    let calibration_residual = (numerator(&xi, &eta_m, &beta_m) - target).abs();

    let (beta_hat, _) = solve_or_min_norm(&moment(&xi, &xi), &cross(&xi, eta), MOMENT_RANK_TOL);
    Ok(RegEstimate {
        nu,
        beta: beta.iter().copied().collect(),
        calibration_residual,
        singular: fallback,
        nu_uncalibrated: numerator(&xi, eta, &beta_hat) / q,
    })
}
