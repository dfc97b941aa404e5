//! Hand-sized fixtures and brute-force arithmetic oracles shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod checks;
pub mod invariants;

use calatt::estimators::{HBlock, TildeH};
use calatt::Dataset;

/// Four rows, `T = (1,1,0,0)`, `Y = (1,2,3,4)`, with fixed scores and fitted regressions.
pub struct Four {
    pub data: Dataset,
    pub pi: [f64; 4],
    pub m0: [f64; 4],
    pub m1: [f64; 4],
}

pub fn four() -> Four {
    Four {
        data: Dataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 1.0, 0.0, 0.0], vec![]).unwrap(),
        pi: [0.5, 0.8, 0.2, 0.5],
        m0: [0.5, 1.5, 2.5, 3.0],
        m1: [1.2, 1.8, 2.0, 2.6],
    }
}

/// Five rows with a continuous covariate `x` and a binary covariate `b`.
pub fn five() -> Dataset {
    Dataset::new(
        vec![4.0, 6.0, 1.0, 3.0, 2.0],
        vec![1.0, 1.0, 0.0, 0.0, 0.0],
        vec![
            ("x".into(), vec![0.5, 1.5, -1.0, 0.0, 2.0]),
            ("b".into(), vec![0.0, 1.0, 0.0, 1.0, 1.0]),
        ],
    )
    .unwrap()
}

/// Fixed `pi~`, `m0_hat`, `m1_hat` for the five-row regression fixture.
pub const FIVE_PI: [f64; 5] = [0.62, 0.55, 0.31, 0.44, 0.27];
pub const FIVE_M0: [f64; 5] = [2.1, 3.4, 1.2, 2.6, 1.9];
pub const FIVE_M1: [f64; 5] = [4.3, 5.2, 2.8, 4.1, 3.5];

pub fn treated_count(t: &[f64]) -> f64 {
    t.iter().sum()
}

/// `sum_{T=0} pi/(1-pi) Y / n1`, or over `sum_{T=0} pi/(1-pi)` when `ratio`.
pub fn ipw0(pi: &[f64], t: &[f64], y: &[f64], ratio: bool) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..y.len() {
        if t[i] == 0.0 {
            let w = pi[i] / (1.0 - pi[i]);
            num += w * y[i];
            den += w;
        }
    }
    if ratio {
        num / den
    } else {
        num / treated_count(t)
    }
}

/// `sum tau0(pi, h) / n1` written out case by case.
pub fn aipw0(pi: &[f64], h: &[f64], t: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        if t[i] == 1.0 {
            s += h[i];
        } else {
            s += pi[i] / (1.0 - pi[i]) * y[i] - (1.0 / (1.0 - pi[i]) - 1.0) * h[i];
        }
    }
    s / treated_count(t)
}

pub fn sp1(pi: &[f64], m1: &[f64], t: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += t[i] * y[i] - (t[i] - pi[i]) * m1[i];
    }
    s / treated_count(t)
}

pub fn treated_mean(t: &[f64], v: &[f64]) -> f64 {
    t.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / treated_count(t)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for col in 0..k {
        let p = (col..k)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            for c in col..k {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// OLS by the normal equations on the rows with `T == arm`.
pub fn ols_arm(cols: &[Vec<f64>], y: &[f64], t: &[f64], arm: f64) -> Vec<f64> {
    let rows: Vec<usize> = (0..y.len()).filter(|&i| t[i] == arm).collect();
    let k = cols.len();
    let xtx = (0..k)
        .map(|a| (0..k).map(|b| rows.iter().map(|&i| cols[a][i] * cols[b][i]).sum()).collect())
        .collect();
    let xty = (0..k).map(|a| rows.iter().map(|&i| cols[a][i] * y[i]).sum()).collect();
    gauss_solve(xtx, xty)
}

/// `h~_1` columns and, optionally, `pi~(1-pi~) m0`: the constant-only `f` case.
pub fn tilde_h_columns(pi: &[f64], m0: &[f64], m1: &[f64], with_extra: bool) -> Vec<Vec<f64>> {
    let n = pi.len();
    let mut cols = vec![
        (0..n).map(|i| (1.0 - pi[i]) * pi[i]).collect::<Vec<_>>(),
        (0..n).map(|i| (1.0 - pi[i]) * pi[i] * m1[i]).collect(),
        (0..n).map(|i| pi[i] * pi[i]).collect(),
        (0..n).map(|i| pi[i] * pi[i] * m0[i]).collect(),
    ];
    if with_extra {
        cols.push((0..n).map(|i| pi[i] * (1.0 - pi[i]) * m0[i]).collect());
    }
    cols
}

/// `E~(eta_t - beta' xi_t) / E~(T)` with `beta = E~(xi zeta')^-1 E~(xi eta)`.
pub fn reg_oracle(pi: &[f64], cols: &[Vec<f64>], t: &[f64], y: &[f64], arm: u8) -> f64 {
    let n = y.len();
    let sign = if arm == 1 { 1.0 } else { -1.0 };
    let xi: Vec<Vec<f64>> = cols
        .iter()
        .map(|h| (0..n).map(|i| sign * (t[i] - pi[i]) * h[i] / (pi[i] * (1.0 - pi[i]))).collect())
        .collect();
    let r: Vec<f64> = (0..n).map(|i| if arm == 1 { t[i] } else { 1.0 - t[i] }).collect();
    let zeta: Vec<Vec<f64>> = cols
        .iter()
        .map(|h| (0..n).map(|i| r[i] * h[i] / (pi[i] * (1.0 - pi[i]))).collect())
        .collect();
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            if arm == 1 {
                t[i] * y[i]
            } else {
                (1.0 - t[i]) * pi[i] * y[i] / (1.0 - pi[i])
            }
        })
        .collect();
    let k = cols.len();
    let a: Vec<Vec<f64>> = (0..k)
        .map(|p| (0..k).map(|q| (0..n).map(|i| xi[p][i] * zeta[q][i]).sum::<f64>() / n as f64).collect())
        .collect();
    let b: Vec<f64> = (0..k).map(|p| (0..n).map(|i| xi[p][i] * eta[i]).sum::<f64>() / n as f64).collect();
    let beta = gauss_solve(a, b);
    let num: f64 = (0..n)
        .map(|i| eta[i] - (0..k).map(|p| beta[p] * xi[p][i]).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    num / (treated_count(t) / n as f64)
}

/// A `TildeH` made of the given columns, all in one block.
pub fn tilde_h_from(cols: Vec<Vec<f64>>, blocks: Vec<HBlock>) -> TildeH {
    let names = (0..cols.len()).map(|j| format!("h{j}")).collect();
    TildeH {
        columns: cols,
        names,
        blocks,
        dropped: Vec::new(),
        v0: Vec::new(),
        v1: Vec::new(),
    }
}

/// Ratio-form arm means with weights `pi/omega` (treated) and `pi/(1-omega)` (untreated).
pub fn lik_ratio_oracle(pi: &[f64], omega: &[f64], t: &[f64], y: &[f64]) -> (f64, f64) {
    let (mut n0, mut d0, mut n1, mut d1) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        if t[i] == 1.0 {
            n1 += pi[i] / omega[i] * y[i];
            d1 += pi[i] / omega[i];
        } else {
            n0 += pi[i] / (1.0 - omega[i]) * y[i];
            d0 += pi[i] / (1.0 - omega[i]);
        }
    }
    (n0 / d0, n1 / d1)
}

/// Maximizes `sum T log w + (1-T) log(1-w)` with `w = pi + lambda' h` by plain
/// Newton iterations with full recomputation and step halving.
pub fn ell_oracle(pi: &[f64], cols: &[Vec<f64>], t: &[f64]) -> Vec<f64> {
    let n = pi.len();
    let k = cols.len();
    let omega = |l: &[f64]| -> Vec<f64> {
        (0..n).map(|i| pi[i] + (0..k).map(|j| l[j] * cols[j][i]).sum::<f64>()).collect()
    };
    let obj = |w: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let v = if t[i] == 1.0 { w[i] } else { 1.0 - w[i] };
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum()
    };
    let mut l = vec![0.0; k];
    for _ in 0..500 {
        let w = omega(&l);
        let g: Vec<f64> = (0..k)
            .map(|j| (0..n).map(|i| (t[i] / w[i] - (1.0 - t[i]) / (1.0 - w[i])) * cols[j][i]).sum())
            .collect();
        if g.iter().all(|v| v.abs() < 1e-14) {
            break;
        }
        let h: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| {
                        (0..n)
                            .map(|i| {
                                (t[i] / (w[i] * w[i]) + (1.0 - t[i]) / ((1.0 - w[i]) * (1.0 - w[i])))
                                    * cols[a][i]
                                    * cols[b][i]
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let d = gauss_solve(h, g);
        let f0 = obj(&w);
        let mut s = 1.0;
        loop {
            let c: Vec<f64> = (0..k).map(|j| l[j] + s * d[j]).collect();
            if obj(&omega(&c)) >= f0 || s < 1e-12 {
                l = c;
                break;
            }
            s *= 0.5;
        }
    }
    l
}

/// Root of an increasing or decreasing function on `[lo, hi]` by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
