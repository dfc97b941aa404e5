//! Maximum likelihood for binary-response regression with an arbitrary inverse link.
//!
//! Fisher scoring with step-halving on the log-likelihood. For the logistic link
//! Fisher scoring coincides with Newton-Raphson and the score equations reduce to
//! `E~[(T - p) a(X)] = 0`.

use nalgebra::{DMatrix, DVector};

use super::design::{rms, DesignMatrix};
use super::lstsq::{detect_redundancy, solve_or_min_norm, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};

/// Evaluated inverse link at one linear predictor value.
#[derive(Debug, Clone, Copy)]
pub struct LinkEval {
    /// P(T = 1)
    pub p: f64,
    /// 1 - p, computed without cancellation.
    pub q: f64,
    /// dp / d(eta)
    pub dp: f64,
    pub log_p: f64,
    pub log_q: f64,
}

/// Inverse link function of a binary regression model.
pub trait BinaryLink: Sync {
    fn eval(&self, eta: f64) -> LinkEval;
    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Logit;

impl BinaryLink for Logit {
    fn eval(&self, eta: f64) -> LinkEval {
        let p = expit(eta);
        let q = expit(-eta);
        // log(1 + e^x) without overflow
        let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
        LinkEval {
            p,
            q,
            dp: p * q,
            log_p: -softplus(-eta),
            log_q: -softplus(eta),
        }
    }

    fn name(&self) -> &'static str {
        "logistic"
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy)]
pub struct BinaryFitOptions {
    /// Bound on the score residual (each score component divided by max(1, rms of its column)).
    pub tol: f64,
    pub max_iter: usize,
    /// |linear predictor| above this is treated as separation.
    pub eta_cap: f64,
    pub rank_tol: f64,
}

impl Default for BinaryFitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            eta_cap: 30.0,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Result of a binary-regression fit. For the logistic link this is the
/// `LogisticFit` of the design.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    /// One entry per design column; columns removed as redundant carry 0.
    pub coefficients: Vec<f64>,
    pub fitted_probabilities: Vec<f64>,
    pub linear_predictor: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest scaled score residual over retained columns at the returned point.
    pub max_score_residual: f64,
    pub retained: Vec<usize>,
    pub log_likelihood: f64,
}

pub type LogisticFit = BinaryFit;

/// Logistic maximum likelihood with optional offset and per-row weights.
pub fn fit_logistic(
    a: &DesignMatrix,
    t: &[f64],
    offset: Option<&[f64]>,
    weights: Option<&[f64]>,
    opts: &BinaryFitOptions,
) -> Result<LogisticFit> {
    fit_binary(a, t, offset, weights, &Logit, opts)
}

pub fn fit_binary(
    a: &DesignMatrix,
    t: &[f64],
    offset: Option<&[f64]>,
    weights: Option<&[f64]>,
    link: &dyn BinaryLink,
    opts: &BinaryFitOptions,
) -> Result<BinaryFit> {
    let n = a.nrows();
    if t.len() != n {
        return Err(Error::structural(format!(
            "treatment has length {} but design has {n} rows",
            t.len()
        )));
    }
    if let Some(o) = offset {
        if o.len() != n {
            return Err(Error::structural("offset length mismatch"));
        }
    }
    if let Some(w) = weights {
        if w.len() != n || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("weights must be finite, nonnegative, one per row"));
        }
    }
    if t.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::invalid("binary response must be 0/1"));
    }
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (n1, n0) = (0..n).fold((0.0, 0.0), |(a1, a0), i| {
        (a1 + w_at(i) * t[i], a0 + w_at(i) * (1.0 - t[i]))
    });
    if n1 == 0.0 || n0 == 0.0 {
        return Err(Error::invalid("both response classes must be present"));
    }
    let wsum = n1 + n0;

    let retained = detect_redundancy(a, opts.rank_tol);
    let design = a.select(&retained)?;
    let k = design.ncols();
    let scales: Vec<f64> = design.columns().map(|c| rms(c).max(1.0)).collect();

    let eval_at = |beta: &[f64]| -> (Vec<f64>, Vec<LinkEval>, f64) {
        let mut eta = design.mul_vec(beta);
        if let Some(o) = offset {
            for (e, oi) in eta.iter_mut().zip(o) {
                *e += oi;
            }
        }
        let le: Vec<LinkEval> = eta.iter().map(|&e| link.eval(e)).collect();
        let ll = le
            .iter()
            .enumerate()
            .map(|(i, l)| w_at(i) * (t[i] * l.log_p + (1.0 - t[i]) * l.log_q))
            .sum::<f64>()
            / wsum;
        (eta, le, ll)
    };
    // Score and Fisher information, both as weighted sample averages.
    let score_info = |le: &[LinkEval]| -> (DVector<f64>, DMatrix<f64>) {
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            let l = &le[i];
            let pq = l.p * l.q;
            let w = w_at(i);
            if pq > 0.0 {
                u[i] = w * (t[i] - l.p) * l.dp / pq;
                v[i] = w * l.dp * l.dp / pq;
            }
        }
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for j in 0..k {
            let cj = design.column(j);
            g[j] = cj.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() / wsum;
            for l in 0..=j {
                let cl = design.column(l);
                let s = (0..n).map(|i| cj[i] * cl[i] * v[i]).sum::<f64>() / wsum;
                h[(j, l)] = s;
                h[(l, j)] = s;
            }
        }
        (g, h)
    };
    let scaled_max = |g: &DVector<f64>| {
        g.iter()
            .zip(&scales)
            .map(|(v, s)| (v / s).abs())
            .fold(0.0, f64::max)
    };
    let separation_rows = |eta: &[f64]| -> Vec<usize> {
        eta.iter()
            .enumerate()
            .filter(|(_, e)| e.abs() > opts.eta_cap)
            .map(|(i, _)| i)
            .collect()
    };

    let mut beta = vec![0.0; k];
    let (mut eta, mut le, mut ll) = eval_at(&beta);
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    loop {
        let (g, h) = score_info(&le);
        let resid = scaled_max(&g);
        let beta_scale = beta.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        if resid <= opts.tol && last_step <= 1e-6 * beta_scale {
            let rows = separation_rows(&eta);
            if !rows.is_empty() {
                return Err(Error::Separation {
                    context: format!("{} fit", link.name()),
                    rows,
                });
            }
            let mut coefficients = vec![0.0; a.ncols()];
            for (&j, b) in retained.iter().zip(&beta) {
                coefficients[j] = *b;
            }
            return Ok(BinaryFit {
                coefficients,
                fitted_probabilities: le.iter().map(|l| l.p).collect(),
                linear_predictor: eta,
                converged: true,
                iterations,
                max_score_residual: resid,
                retained,
                log_likelihood: ll,
            });
        }
        if iterations >= opts.max_iter {
            let rows = separation_rows(&eta);
            if !rows.is_empty() {
                return Err(Error::Separation {
                    context: format!("{} fit", link.name()),
                    rows,
                });
            }
            return Err(Error::NonConvergence {
                solver: format!("{} maximum likelihood", link.name()),
                iterations,
                residual: resid,
                last_iterate: beta,
            });
        }
        iterations += 1;

        let chol = h.clone().cholesky();
        let step = match chol {
            Some(c) => c.solve(&g),
            None => solve_or_min_norm(&h, &g, 1e-12).0,
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let (e2, l2, ll2) = eval_at(&cand);
            if ll2.is_finite() && ll2 >= ll - 1e-13 * ll.abs().max(1.0) {
                last_step = step.iter().fold(0.0f64, |m, s| m.max((scale * s).abs()));
                beta = cand;
                eta = e2;
                le = l2;
                ll = ll2;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // No ascent possible at working precision; treat the current point as final.
            last_step = 0.0;
        }
        let rows = separation_rows(&eta);
        if !rows.is_empty() {
            return Err(Error::Separation {
                context: format!("{} fit", link.name()),
                rows,
            });
        }
    }
}
