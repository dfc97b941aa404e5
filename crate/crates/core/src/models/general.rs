//! Augmentation of a non-logistic propensity model.
//!
//! The model is `link(theta' z)` with `z = (f, 1/rho, m0/rho, m1/rho)` and
//! `rho = link'(gamma_hat' f) / {pi_hat (1 - pi_hat)}`, solved from
//! `E~[(T - pi_aug) u] = 0` with `u = rho * z = (rho f, 1, m0, m1)`.
//! Because `u = rho z` the Jacobian `-E~[link'(eta) rho z z']` is symmetric.

use nalgebra::{DMatrix, DVector};

use super::augmented::{check_inputs, fitted_column, score_average, AugVariant, AugmentedPsFit};
use super::outcome::OutcomeFit;
use super::propensity::{Link, PropensityFit};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numkernel::{
    detect_redundancy, dot, solve_or_min_norm, ColumnKind, ColumnLabel, DesignMatrix, DEFAULT_RANK_TOL,
};

const TOL: f64 = 1e-10;
const MAX_ITER: usize = 100;
const ETA_CAP: f64 = 30.0;

pub fn fit_aug_ps_general(
    ps: &PropensityFit,
    or0: &OutcomeFit,
    or1: &OutcomeFit,
    data: &Dataset,
) -> Result<AugmentedPsFit> {
    check_inputs(ps, or0, or1, data)?;
    let n = data.len();
    let t = data.t();
    let link = ps.link.as_binary();
    let rho = ps.rho();
    if let Some(i) = rho.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::NonFinite {
            what: "rho_hat".into(),
            row: i,
        });
    }
    let inv = |v: &[f64]| -> Vec<f64> { v.iter().zip(&rho).map(|(a, r)| a / r).collect() };
    let p = ps.design.ncols();
    let design = ps.design.with_columns(vec![
        (ColumnLabel::new("1/rho", ColumnKind::Derived), inv(&vec![1.0; n])),
        fitted_column("m0_hat/rho", &inv(&or0.m_hat)),
        fitted_column("m1_hat/rho", &inv(&or1.m_hat)),
    ])?;
    let retained = detect_redundancy(&design, DEFAULT_RANK_TOL);
    let k = retained.len();
    let z: Vec<&[f64]> = retained.iter().map(|&j| design.column(j)).collect();
    let u: Vec<Vec<f64>> = z
        .iter()
        .map(|c| c.iter().zip(&rho).map(|(a, r)| a * r).collect())
        .collect();
    let scales: Vec<f64> = u
        .iter()
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1.0))
        .collect();

    let collapsed = ps.link == Link::Logistic && !retained.iter().any(|&j| j >= p);
    if collapsed {
        let mut coefficients = ps.gamma().to_vec();
        coefficients.extend([0.0; 3]);
        return Ok(finish(ps, or0, or1, t, design, coefficients, retained, ps.pi_hat.clone(), true, 0, rho));
    }

    let eta_of = |theta: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| z.iter().zip(theta).map(|(c, b)| c[i] * b).sum())
            .collect()
    };
    let residual = |eta: &[f64]| -> (Vec<f64>, f64) {
        let r: Vec<f64> = (0..n).map(|i| t[i] - link.eval(eta[i]).p).collect();
        let g: Vec<f64> = u.iter().map(|c| dot(&r, c) / n as f64).collect();
        let m = g.iter().zip(&scales).map(|(a, s)| (a / s).abs()).fold(0.0, f64::max);
        (g, m)
    };

    let mut theta: Vec<f64> = retained
        .iter()
        .map(|&j| if j < p { ps.gamma()[j] } else { 0.0 })
        .collect();
    let mut eta = eta_of(&theta);
    let (mut g, mut res) = residual(&eta);
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let scale = theta.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        if res <= TOL && last_step <= 1e-6 * scale {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(Error::NonConvergence {
                solver: "augmented propensity estimating equations".into(),
                iterations,
                residual: res,
                last_iterate: theta,
            });
        }
        iterations += 1;
        let w: Vec<f64> = (0..n).map(|i| link.eval(eta[i]).dp * rho[i]).collect();
        let mut m = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..=a {
                let s = (0..n).map(|i| w[i] * z[a][i] * z[b][i]).sum::<f64>() / n as f64;
                m[(a, b)] = s;
                m[(b, a)] = s;
            }
        }
        let (step, _) = solve_or_min_norm(&m, &DVector::from_vec(g.clone()), DEFAULT_RANK_TOL);
        let mut frac = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + frac * s).collect();
            let ce = eta_of(&cand);
            let (cg, cres) = residual(&ce);
            let merit = |v: &[f64]| v.iter().zip(&scales).map(|(a, s)| (a / s).powi(2)).sum::<f64>();
            if cres.is_finite() && merit(&cg) <= merit(&g) {
                last_step = step.iter().fold(0.0f64, |mx, s| mx.max((frac * s).abs()));
                theta = cand;
                eta = ce;
                g = cg;
                res = cres;
                accepted = true;
                break;
            }
            frac *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                solver: "augmented propensity estimating equations (line search)".into(),
                iterations,
                residual: res,
                last_iterate: theta,
            });
        }
        let rows: Vec<usize> = (0..n).filter(|&i| eta[i].abs() > ETA_CAP).collect();
        if !rows.is_empty() {
            return Err(Error::Separation {
                context: format!("{} augmented propensity fit", link.name()),
                rows,
            });
        }
    }
    let mut coefficients = vec![0.0; design.ncols()];
    for (&j, b) in retained.iter().zip(&theta) {
        coefficients[j] = *b;
    }
    let tilde_pi: Vec<f64> = eta.iter().map(|&e| link.eval(e).p).collect();
    Ok(finish(ps, or0, or1, t, design, coefficients, retained, tilde_pi, false, iterations, rho))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    ps: &PropensityFit,
    or0: &OutcomeFit,
    or1: &OutcomeFit,
    t: &[f64],
    design: DesignMatrix,
    coefficients: Vec<f64>,
    retained: Vec<usize>,
    tilde_pi: Vec<f64>,
    collapsed: bool,
    iterations: usize,
    rho: Vec<f64>,
) -> AugmentedPsFit {
    let p = ps.design.ncols();
    AugmentedPsFit {
        variant: AugVariant::General,
        f: ps.design.clone(),
        design,
        offset: None,
        delta: coefficients[p + 1..].to_vec(),
        coefficients,
        retained,
        augmentation_residuals: [
            score_average(t, &tilde_pi, &or0.m_hat),
            score_average(t, &tilde_pi, &or1.m_hat),
        ],
        tilde_pi,
        collapsed_to_base: collapsed,
        iterations,
        calibration_targets: None,
        rho: Some(rho),
    }
}
