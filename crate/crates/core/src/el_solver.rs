//! Calibrated likelihood estimators.
//!
//! `omega(X; lambda) = pi~(X) + lambda' h~(X)`. The first stage maximizes
//! `l(lambda) = E~[T log omega + (1-T) log(1-omega)]` over the region where
//! `omega > 0` on treated rows and `omega < 1` on untreated rows. The log terms
//! are their own barrier, so Newton steps are simply halved until the trial
//! point is feasible and does not decrease the objective.
//!
//! The second stage refits, for each arm t, the coefficients of the block
//! `h~_1t` with the remaining coefficients held at the first-stage solution, so
//! that `E~[{R_t / omega(t, X) - 1} v~_t] = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{build_tilde_h, HBlock, TildeH};
use crate::models::{fit_aug_ps, AugVariant, AugmentedPsFit, OutcomeFit, PropensityFit};
use crate::numkernel::{solve_or_min_norm, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy)]
pub struct ElOptions {
    /// Bound on the gradient sup-norm (components divided by max(1, rms of the column)).
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Same-arm `omega(t, X)` below this is reported as non-convergence.
    pub omega_floor: f64,
}

impl Default for ElOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            max_halvings: 50,
            omega_floor: 1e-12,
        }
    }
}

/// First-stage solution `lambda_hat` and `omega(X; lambda_hat)`.
#[derive(Debug, Clone)]
pub struct OmegaState {
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub feasible: bool,
    pub iterations: usize,
    /// Unscaled `max_j |E~[(T - omega)/{omega(1-omega)} h~_j]|`.
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
}

fn is_feasible(omega: &[f64], t: &[f64]) -> bool {
    omega
        .iter()
        .zip(t)
        .all(|(w, ti)| if *ti == 1.0 { *w > 0.0 } else { *w < 1.0 })
}

fn col_scales(cols: &[Vec<f64>]) -> Vec<f64> {
    cols.iter()
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt().max(1.0))
        .collect()
}

fn omega_at(pi: &[f64], th: &TildeH, lambda: &[f64]) -> Vec<f64> {
    let comb = th.combine(lambda);
    pi.iter().zip(comb).map(|(p, c)| p + c).collect()
}

fn ell(omega: &[f64], t: &[f64]) -> f64 {
    let n = t.len() as f64;
    omega
        .iter()
        .zip(t)
        .map(|(w, ti)| if *ti == 1.0 { w.ln() } else { (1.0 - w).ln() })
        .sum::<f64>()
        / n
}

/// `E~[(T - omega)/{omega (1 - omega)} h~]` written as `E~[{T/omega - (1-T)/(1-omega)} h~]`,
/// which only evaluates each row on its own arm.
fn ell_gradient(omega: &[f64], t: &[f64], cols: &[Vec<f64>]) -> Vec<f64> {
    let n = t.len();
    let r: Vec<f64> = (0..n)
        .map(|i| if t[i] == 1.0 { 1.0 / omega[i] } else { -1.0 / (1.0 - omega[i]) })
        .collect();
    cols.iter()
        .map(|c| c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Weighted Gram matrix `E~[w h h']`.
fn gram(cols: &[Vec<f64>], w: &[f64]) -> DMatrix<f64> {
    let k = cols.len();
    let n = w.len() as f64;
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..=a {
            let s = cols[a]
                .iter()
                .zip(&cols[b])
                .zip(w)
                .map(|((x, y), wi)| x * y * wi)
                .sum::<f64>()
                / n;
            m[(a, b)] = s;
            m[(b, a)] = s;
        }
    }
    m
}

/// Newton ascent direction `(-H)^-1 g` for a concave objective with Hessian
/// `-info`. Falls back to the minimum-norm solution when `info` is not
/// positive definite at tolerance; the flag reports the fallback.
fn newton_direction(info: DMatrix<f64>, g: &[f64]) -> (DVector<f64>, bool) {
    let rhs = DVector::from_column_slice(g);
    if let Some(ch) = info.clone().cholesky() {
        let d = ch.solve(&rhs);
        if d.iter().all(|v| v.is_finite()) {
            return (d, false);
        }
    }
    let (d, _) = solve_or_min_norm(&info, &rhs, DEFAULT_RANK_TOL);
    (d, true)
}

fn sup_scaled(g: &[f64], scales: &[f64]) -> f64 {
    g.iter().zip(scales).map(|(a, s)| (a / s).abs()).fold(0.0, f64::max)
}

/// Maximizes `l(lambda)` from `lambda = 0`.
pub fn maximize_ell(tilde_pi: &[f64], th: &TildeH, t: &[f64]) -> Result<OmegaState> {
    maximize_ell_with(tilde_pi, th, t, &ElOptions::default())
}

pub fn maximize_ell_with(tilde_pi: &[f64], th: &TildeH, t: &[f64], opts: &ElOptions) -> Result<OmegaState> {
    let n = t.len();
    if tilde_pi.len() != n || th.columns.iter().any(|c| c.len() != n) {
        return Err(Error::structural("likelihood inputs differ in length"));
    }
    if tilde_pi.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::invalid("fitted propensities must lie strictly inside (0, 1)"));
    }
    let cols = &th.columns;
    let scales = col_scales(cols);
    let mut lambda = vec![0.0; th.ncols()];
    let mut omega = tilde_pi.to_vec();
    let mut obj = ell(&omega, t);
    let mut g = ell_gradient(&omega, t, cols);
    let mut warnings = Vec::new();
    let mut iterations = 0;
    while sup_scaled(&g, &scales) > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                solver: "likelihood first stage".into(),
                iterations,
                residual: sup_scaled(&g, &scales),
                last_iterate: lambda,
            });
        }
        iterations += 1;
        let w: Vec<f64> = (0..n)
            .map(|i| if t[i] == 1.0 { omega[i].powi(-2) } else { (1.0 - omega[i]).powi(-2) })
            .collect();
        let (d, fallback) = newton_direction(gram(cols, &w), &g);
        if fallback && !warnings.iter().any(|m: &String| m.contains("curvature")) {
            warnings.push("likelihood first stage: loss of curvature, least-squares Newton direction used".into());
        }
        let mut frac = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = lambda.iter().zip(d.iter()).map(|(l, s)| l + frac * s).collect();
            let cw = omega_at(tilde_pi, th, &cand);
            if is_feasible(&cw, t) {
                let cobj = ell(&cw, t);
                if cobj >= obj
                    || (cobj >= obj - 1e-13 * obj.abs().max(1.0)
                        && sup_scaled(&ell_gradient(&cw, t, cols), &scales) < sup_scaled(&g, &scales))
                {
                    lambda = cand;
                    omega = cw;
                    obj = cobj;
                    accepted = true;
                    break;
                }
            }
            frac *= 0.5;
        }
        g = ell_gradient(&omega, t, cols);
        if !accepted {
            return Err(Error::NonConvergence {
                solver: "likelihood first stage (step halving exhausted)".into(),
                iterations,
                residual: sup_scaled(&g, &scales),
                last_iterate: lambda,
            });
        }
    }
    Ok(OmegaState {
        gradient_norm: g.iter().fold(0.0, |m, v| m.max(v.abs())),
        lambda,
        omega,
        feasible: true,
        iterations,
        warnings,
    })
}

/// `nu_lik_hat^0, nu_lik_hat^1` in ratio form.
pub fn nu_lik_hat(state: &OmegaState, tilde_pi: &[f64], data: &Dataset) -> Result<(f64, f64)> {
    let t = data.t();
    if !state.feasible || !is_feasible(&state.omega, t) {
        return Err(Error::Infeasible("likelihood state violates the arm constraints".into()));
    }
    let y = data.y();
    let (mut n0, mut d0, mut n1, mut d1) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..data.len() {
        if t[i] == 1.0 {
            let w = tilde_pi[i] / state.omega[i];
            n1 += w * y[i];
            d1 += w;
        } else {
            let w = tilde_pi[i] / (1.0 - state.omega[i]);
            n0 += w * y[i];
            d0 += w;
        }
    }
    Ok((n0 / d0, n1 / d1))
}

/// Second-stage refit for arm `t`.
#[derive(Debug, Clone)]
pub struct KappaFit {
    pub t: u8,
    /// Full coefficient vector `lambda~^t`.
    pub lambda: Vec<f64>,
    /// Indices into `h~` of the refit block.
    pub block: Vec<usize>,
    /// `omega(t, X; lambda~^t)`: `omega` for t = 1, `1 - omega` for t = 0.
    pub omega_t: Vec<f64>,
    pub iterations: usize,
    /// `max_j |E~[{R_t/omega(t,X) - 1} v~_tj]|` over the block.
    pub residual: f64,
}

/// Maximizes `kappa_t` over the `h~_1t` block, starting at `lambda_hat`.
///
/// For t = 1 the objective is `E~[T log omega / (1 - pi~) - lambda_11' v~_1]`.
/// For t = 0 it is `E~[(1-T) log(1 - omega) / pi~ + lambda_10' v~_0]`; the sign of the
/// linear term is the one whose stationarity condition is
/// `E~[{(1-T)/(1-omega) - 1} v~_0] = 0`.
pub fn maximize_kappa(
    state: &OmegaState,
    th: &TildeH,
    tilde_pi: &[f64],
    t_vec: &[f64],
    t: u8,
) -> Result<KappaFit> {
    maximize_kappa_with(state, th, tilde_pi, t_vec, t, &ElOptions::default())
}

pub fn maximize_kappa_with(
    state: &OmegaState,
    th: &TildeH,
    tilde_pi: &[f64],
    t_vec: &[f64],
    t: u8,
    opts: &ElOptions,
) -> Result<KappaFit> {
    let n = t_vec.len();
    let block = th.block_indices(if t == 1 { HBlock::Treated } else { HBlock::Untreated });
    let r: Vec<f64> = t_vec.iter().map(|v| if t == 1 { *v } else { 1.0 - v }).collect();
    // v~_t columns of the block: h~ / (1 - pi~) for t = 1, h~ / pi~ for t = 0.
    let v: Vec<Vec<f64>> = block
        .iter()
        .map(|&j| {
            th.columns[j]
                .iter()
                .zip(tilde_pi)
                .map(|(h, p)| if t == 1 { h / (1.0 - p) } else { h / p })
                .collect()
        })
        .collect();
    // pi~(t, X) for the derivative of omega(t, X) along v~_t.
    let pit: Vec<f64> = tilde_pi.iter().map(|p| if t == 1 { 1.0 - p } else { *p }).collect();
    let mut base_lambda = state.lambda.clone();
    for &j in &block {
        base_lambda[j] = 0.0;
    }
    let base: Vec<f64> = omega_at(tilde_pi, th, &base_lambda);
    let scales = col_scales(&v);

    // omega(t, X) = b_t(X) + pi~(t, X) lambda' v~_t(X), with sign folded into b_t.
    let omega_t = |lb: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let s: f64 = v.iter().zip(lb).map(|(c, l)| c[i] * l).sum::<f64>() * pit[i];
                if t == 1 {
                    base[i] + s
                } else {
                    1.0 - base[i] - s
                }
            })
            .collect()
    };
    let sgn = if t == 1 { 1.0 } else { -1.0 };
    let feasible = |w: &[f64]| (0..n).all(|i| r[i] == 0.0 || w[i] > 0.0);
    let objective = |w: &[f64], lb: &[f64]| -> f64 {
        let lik: f64 = (0..n)
            .filter(|&i| r[i] == 1.0)
            .map(|i| w[i].ln() / pit[i])
            .sum::<f64>()
            / n as f64;
        let pen: f64 = v
            .iter()
            .zip(lb)
            .map(|(c, l)| l * c.iter().sum::<f64>() / n as f64)
            .sum();
        lik - sgn * pen
    };
    // Gradient in the t = 1 parameterization, E~[(R_t/omega_t - 1) v~_t]; for t = 0 the
    // derivative with respect to lambda_10 is its negative.
    let stationarity = |w: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|c| {
                (0..n)
                    .map(|i| (if r[i] == 1.0 { 1.0 / w[i] } else { 0.0 } - 1.0) * c[i])
                    .sum::<f64>()
                    / n as f64
            })
            .collect()
    };

    let mut lb: Vec<f64> = block.iter().map(|&j| state.lambda[j]).collect();
    let mut w = omega_t(&lb);
    if !feasible(&w) {
        return Err(Error::Infeasible("second stage starts outside the feasible region".into()));
    }
    let mut obj = objective(&w, &lb);
    let mut s = stationarity(&w);
    let mut iterations = 0;
    while sup_scaled(&s, &scales) > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                solver: format!("likelihood second stage (t = {t})"),
                iterations,
                residual: sup_scaled(&s, &scales),
                last_iterate: lb,
            });
        }
        iterations += 1;
        let weights: Vec<f64> = (0..n)
            .map(|i| if r[i] == 1.0 { pit[i] / (w[i] * w[i]) } else { 0.0 })
            .collect();
        let grad: Vec<f64> = s.iter().map(|g| sgn * g).collect();
        let (d, _) = newton_direction(gram(&v, &weights), &grad);
        let mut frac = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = lb.iter().zip(d.iter()).map(|(l, s)| l + frac * s).collect();
            let cw = omega_t(&cand);
            if feasible(&cw) {
                let cobj = objective(&cw, &cand);
                if cobj >= obj
                    || (cobj >= obj - 1e-13 * obj.abs().max(1.0)
                        && sup_scaled(&stationarity(&cw), &scales) < sup_scaled(&s, &scales))
                {
                    lb = cand;
                    w = cw;
                    obj = cobj;
                    accepted = true;
                    break;
                }
            }
            frac *= 0.5;
        }
        s = stationarity(&w);
        if !accepted {
            return Err(Error::NonConvergence {
                solver: format!("likelihood second stage (t = {t}, boundary)"),
                iterations,
                residual: sup_scaled(&s, &scales),
                last_iterate: lb,
            });
        }
    }
    if (0..n).any(|i| r[i] == 1.0 && w[i] < opts.omega_floor) {
        return Err(Error::NonConvergence {
            solver: format!("likelihood second stage (t = {t}, weight explosion)"),
            iterations,
            residual: sup_scaled(&s, &scales),
            last_iterate: lb,
        });
    }
    let mut lambda = state.lambda.clone();
    for (&j, l) in block.iter().zip(&lb) {
        lambda[j] = *l;
    }
    Ok(KappaFit {
        t,
        lambda,
        block,
        omega_t: w,
        iterations,
        residual: s.iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

/// Final likelihood estimates with solver diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LikEstimate {
    pub nu0: f64,
    pub nu1: f64,
    pub att: f64,
    pub lambda_hat: Vec<f64>,
    pub lambda_tilde_0: Vec<f64>,
    pub lambda_tilde_1: Vec<f64>,
    /// First-stage (non-doubly-robust) estimates.
    pub nu0_hat: f64,
    pub nu1_hat: f64,
    pub iterations: [usize; 3],
    pub ell_gradient: f64,
    pub kappa_residuals: [f64; 2],
    /// `|ratio form - E~(T) form|` per arm.
    pub form_gaps: [f64; 2],
    pub collapsed_to_base: bool,
    pub warnings: Vec<String>,
}

fn tilde_nu(fit: &KappaFit, tilde_pi: &[f64], data: &Dataset) -> (f64, f64) {
    let t = data.t();
    let y = data.y();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..data.len() {
        let same = if fit.t == 1 { t[i] == 1.0 } else { t[i] == 0.0 };
        if same {
            let w = tilde_pi[i] / fit.omega_t[i];
            num += w * y[i];
            den += w;
        }
    }
    let n = data.len() as f64;
    let q = data.treated_share();
    (num / den, num / n / q)
}

/// `nu~_lik^t` in ratio form; the `E~(T)` form is recorded as a diagnostic.
pub fn nu_lik_tilde(
    state: &OmegaState,
    refits: [&KappaFit; 2],
    tilde_pi: &[f64],
    data: &Dataset,
) -> Result<LikEstimate> {
    let (h0, h1) = nu_lik_hat(state, tilde_pi, data)?;
    let (r0, e0) = tilde_nu(refits[0], tilde_pi, data);
    let (r1, e1) = tilde_nu(refits[1], tilde_pi, data);
    for (nu, arm) in [(r0, 0u8), (r1, 1u8)] {
        let (lo, hi) = data
            .arm_range(arm)
            .ok_or_else(|| Error::invalid(format!("no rows with T = {arm}")))?;
        let slack = 1e-9 * (hi - lo).abs().max(lo.abs()).max(hi.abs()).max(1.0);
        if !(nu >= lo - slack && nu <= hi + slack) {
            return Err(Error::Infeasible(format!(
                "likelihood estimate {nu} for arm {arm} outside the outcome range [{lo}, {hi}]"
            )));
        }
    }
    Ok(LikEstimate {
        nu0: r0,
        nu1: r1,
        att: r1 - r0,
        lambda_hat: state.lambda.clone(),
        lambda_tilde_0: refits[0].lambda.clone(),
        lambda_tilde_1: refits[1].lambda.clone(),
        nu0_hat: h0,
        nu1_hat: h1,
        iterations: [state.iterations, refits[0].iterations, refits[1].iterations],
        ell_gradient: state.gradient_norm,
        kappa_residuals: [refits[0].residual, refits[1].residual],
        form_gaps: [(r0 - e0).abs(), (r1 - e1).abs()],
        collapsed_to_base: false,
        warnings: state.warnings.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LikVariant {
    /// Full augmented model with `h~ = (h~_1, C h~_2)`.
    Lik,
    /// Offset augmented model with `h~ = h~_1`.
    Lik2,
}

/// Likelihood estimate from an already fitted augmented model.
pub fn lik_from_aug(
    aug: &AugmentedPsFit,
    or0: &OutcomeFit,
    or1: &OutcomeFit,
    data: &Dataset,
    include_h2: bool,
) -> Result<LikEstimate> {
    let targets: Option<Vec<Vec<Vec<f64>>>> = aug.calibration_targets.as_ref().map(|cs| {
        cs.iter()
            .map(|c| c.columns().map(<[f64]>::to_vec).collect())
            .collect()
    });
    let (th, _) = build_tilde_h(
        aug,
        or0,
        or1,
        data,
        include_h2,
        targets.as_ref().map(|v| (v[0].as_slice(), v[1].as_slice())),
    )?;
    let state = maximize_ell(&aug.tilde_pi, &th, data.t())?;
    let k0 = maximize_kappa(&state, &th, &aug.tilde_pi, data.t(), 0)?;
    let k1 = maximize_kappa(&state, &th, &aug.tilde_pi, data.t(), 1)?;
    let mut est = nu_lik_tilde(&state, [&k0, &k1], &aug.tilde_pi, data)?;
    est.collapsed_to_base = aug.collapsed_to_base;
    Ok(est)
}

/// LIK: full augmentation and full `h~`. LIK2: offset augmentation and `h~_1` only.
pub fn lik_estimator(
    data: &Dataset,
    ps: &PropensityFit,
    or0: &OutcomeFit,
    or1: &OutcomeFit,
    variant: LikVariant,
) -> Result<LikEstimate> {
    let (aug_variant, include_h2) = match variant {
        LikVariant::Lik => (AugVariant::Full, true),
        LikVariant::Lik2 => (AugVariant::Offset, false),
    };
    let aug = fit_aug_ps(ps, or0, or1, data, aug_variant, None)?;
    lik_from_aug(&aug, or0, or1, data, include_h2)
}
