use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::models::{build_regressors, OutcomeFit, RegressorSpec};
use crate::numkernel::{detect_redundancy, expit, solve_or_min_norm, ColumnKind, DEFAULT_RANK_TOL};

fn check_len(v: &[f64], data: &Dataset, what: &str) -> Result<()> {
    if v.len() != data.len() {
        return Err(Error::structural(format!(
            "{what} has length {} but data has {} rows",
            v.len(),
            data.len()
        )));
    }
    Ok(())
}

fn treated_mean_denominator(data: &Dataset) -> Result<f64> {
    let n1 = data.n_treated();
    if n1 == 0 {
        return Err(Error::invalid("no treated rows"));
    }
    Ok(n1 as f64)
}

/// `pi / (1 - pi)` on untreated rows, 0 on treated rows.
pub fn odds_weights(pi: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    check_len(pi, data, "propensity vector")?;
    let mut w = vec![0.0; data.len()];
    for (i, (&p, &t)) in pi.iter().zip(data.t()).enumerate() {
        if t == 0.0 {
            let v = p / (1.0 - p);
            if !v.is_finite() || !(p > 0.0) {
                return Err(Error::NonFinite {
                    what: format!("inverse probability weight (pi = {p})"),
                    row: i,
                });
            }
            w[i] = v;
        }
    }
    Ok(w)
}

/// `n1^-1 sum T Y`
pub fn nu1_np(data: &Dataset) -> Result<f64> {
    let n1 = treated_mean_denominator(data)?;
    Ok(data.y().iter().zip(data.t()).map(|(y, t)| t * y).sum::<f64>() / n1)
}

/// `n1^-1 sum T m_t_hat`, with t the arm the regression was fitted on.
pub fn nu_or(orfit: &OutcomeFit, data: &Dataset) -> Result<f64> {
    check_len(&orfit.m_hat, data, "fitted regression")?;
    let n1 = treated_mean_denominator(data)?;
    Ok(orfit.m_hat.iter().zip(data.t()).map(|(m, t)| t * m).sum::<f64>() / n1)
}

/// `E~[(1-T) pi Y/(1-pi)] / E~(T)`, or over `E~[(1-T) pi/(1-pi)]` when `ratio`.
pub fn nu0_ipw(pi: &[f64], data: &Dataset, ratio: bool) -> Result<f64> {
    let w = odds_weights(pi, data)?;
    let num: f64 = w.iter().zip(data.y()).map(|(w, y)| w * y).sum();
    let den = if ratio {
        w.iter().sum::<f64>()
    } else {
        treated_mean_denominator(data)?
    };
    if !(den > 0.0) {
        return Err(Error::invalid("IPW denominator is zero (no untreated rows)"));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AipwFlavor {
    /// `tau0(pi, m0)`
    Np,
    /// `tau0(pi, pi m0)`
    Sp,
}

/// `tau0(pi, h) = (1-T) pi Y/(1-pi) - {(1-T)/(1-pi) - 1} h`, row by row.
pub fn tau0(pi: &[f64], h: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    check_len(h, data, "augmentation term")?;
    let w = odds_weights(pi, data)?;
    Ok((0..data.len())
        .map(|i| {
            let t = data.t()[i];
            let inv = if t == 0.0 { 1.0 / (1.0 - pi[i]) } else { 0.0 };
            w[i] * data.y()[i] - (inv - 1.0) * h[i]
        })
        .collect())
}

/// Augmented IPW estimate of `nu^0`; both flavors divide by `E~(T)`.
pub fn nu0_aipw(pi: &[f64], m0: &[f64], data: &Dataset, flavor: AipwFlavor) -> Result<f64> {
    check_len(m0, data, "fitted regression")?;
    let h: Vec<f64> = match flavor {
        AipwFlavor::Np => m0.to_vec(),
        AipwFlavor::Sp => pi.iter().zip(m0).map(|(p, m)| p * m).collect(),
    };
    let n1 = treated_mean_denominator(data)?;
    Ok(tau0(pi, &h, data)?.iter().sum::<f64>() / n1)
}

/// `|E~(T) - E~(pi)|`, the gap between the two denominators of the SP form.
pub fn sp_denominator_gap(pi: &[f64], data: &Dataset) -> f64 {
    let n = data.len() as f64;
    (data.t().iter().sum::<f64>() - pi.iter().sum::<f64>()).abs() / n
}

/// `E~[T Y - (T - pi) m1] / E~(T)`
pub fn nu1_aipw_sp(pi: &[f64], m1: &[f64], data: &Dataset) -> Result<f64> {
    check_len(pi, data, "propensity vector")?;
    check_len(m1, data, "fitted regression")?;
    let n1 = treated_mean_denominator(data)?;
    Ok((0..data.len())
        .map(|i| {
            let t = data.t()[i];
            t * data.y()[i] - (t - pi[i]) * m1[i]
        })
        .sum::<f64>()
        / n1)
}

/// Exponential tilting weights balancing `f(X)` of the untreated against the treated.
#[derive(Debug, Clone)]
pub struct HirWeights {
    /// One entry per regressor column; 0 on columns dropped as redundant.
    pub gamma: Vec<f64>,
    /// `exp(gamma' f)` on untreated rows, 0 on treated rows.
    pub r: Vec<f64>,
    /// `expit(gamma' f)` on all rows.
    pub pi_breve: Vec<f64>,
    /// `max_j |sum (1-T) r f_j - sum T f_j|`
    pub balance_residual: f64,
    pub iterations: usize,
}

const HIR_MAX_ITER: usize = 200;
const HIR_ETA_CAP: f64 = 50.0;

/// Solves `sum (1-T) exp(gamma'f) f = sum T f` by Newton's method on the convex dual
/// `sum_{T=0} exp(gamma'f) - gamma' sum_{T=1} f`.
pub fn hir_weights(data: &Dataset, f_spec: &RegressorSpec) -> Result<HirWeights> {
    let n1 = data.n_treated();
    let n0 = data.n_untreated();
    if n0 == 0 || n1 == 0 {
        return Err(Error::invalid("balancing weights need both treated and untreated rows"));
    }
    let full = build_regressors(f_spec, data)?;
    let retained = detect_redundancy(&full, DEFAULT_RANK_TOL);
    let design = full.select(&retained)?;
    let k = design.ncols();
    let n = data.len() as f64;
    let t = data.t();
    let untreated = data.arm_rows(0);
    // Solve in centred and scaled coordinates; balance is invariant to this change
    // because the constant is retained.
    let shift: Vec<(f64, f64)> = design
        .columns()
        .enumerate()
        .map(|(j, c)| {
            let m = c.iter().sum::<f64>() / n;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if design.label(j).kind == ColumnKind::Constant || sd == 0.0 {
                (0.0, 1.0)
            } else {
                (m, sd)
            }
        })
        .collect();
    let std_cols: Vec<Vec<f64>> = design
        .columns()
        .zip(&shift)
        .map(|(c, (m, sd))| c.iter().map(|v| (v - m) / sd).collect())
        .collect();
    let cols: Vec<&[f64]> = std_cols.iter().map(Vec::as_slice).collect();
    let const_col = (0..k).find(|&j| shift[j] == (0.0, 1.0) && cols[j].iter().all(|v| *v == cols[j][0]));
    let target: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().zip(t).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let scales: Vec<f64> = cols
        .iter()
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / n).sqrt().max(1.0))
        .collect();

    let eta_at = |g: &[f64], i: usize| -> f64 { cols.iter().zip(g).map(|(c, b)| c[i] * b).sum() };
    let dual = |g: &[f64]| -> f64 {
        let s: f64 = untreated.iter().map(|&i| eta_at(g, i).exp()).sum();
        (s - g.iter().zip(&target).map(|(a, b)| a * b).sum::<f64>()) / n
    };
    let grad = |g: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = target.iter().map(|v| -v).collect();
        for &i in &untreated {
            let r = eta_at(g, i).exp();
            for (o, c) in out.iter_mut().zip(&cols) {
                *o += r * c[i];
            }
        }
        out.iter().map(|v| v / n).collect()
    };

    let mut gamma = vec![0.0; k];
    // Intercept start reproduces sum (1-T) r = n1 exactly.
    if let Some(j) = const_col {
        gamma[j] = (n1 as f64 / n0 as f64).ln() / cols[j][0];
    }
    let mut d = dual(&gamma);
    let mut g = grad(&gamma);
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let scaled = g.iter().zip(&scales).map(|(a, s)| (a / s).abs()).fold(0.0, f64::max);
        let gscale = gamma.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        if scaled <= 1e-12 || (scaled <= 1e-10 && last_step <= 1e-8 * gscale) {
            break;
        }
        if iterations >= HIR_MAX_ITER {
            return Err(Error::Infeasible(format!(
                "balancing equations not solved after {iterations} iterations (scaled gradient {scaled:.3e}); \
                 treated covariate means may lie outside the untreated support"
            )));
        }
        iterations += 1;
        let mut h = DMatrix::zeros(k, k);
        for &i in &untreated {
            let r = eta_at(&gamma, i).exp();
            for a in 0..k {
                for b in 0..=a {
                    h[(a, b)] += r * cols[a][i] * cols[b][i] / n;
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        let (step, _) = solve_or_min_norm(&h, &DVector::from_vec(g.clone()), DEFAULT_RANK_TOL);
        let slope: f64 = -step.iter().zip(&g).map(|(s, gi)| s * gi).sum::<f64>();
        let mut frac = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = gamma.iter().zip(step.iter()).map(|(a, s)| a - frac * s).collect();
            let cd = dual(&cand);
            // Near the optimum the dual is flat to rounding; a smaller gradient decides.
            let flat = cd.is_finite()
                && cd <= d + 1e-13 * d.abs().max(1.0)
                && grad(&cand).iter().zip(&scales).map(|(a, s)| (a / s).abs()).fold(0.0, f64::max) < scaled;
            if cd.is_finite() && (cd <= d + 1e-4 * frac * slope || flat) {
                last_step = step.iter().fold(0.0f64, |m, s| m.max((frac * s).abs()));
                gamma = cand;
                d = cd;
                accepted = true;
                break;
            }
            frac *= 0.5;
        }
        if !accepted {
            // No descent left at working precision.
            break;
        }
        if untreated.iter().any(|&i| eta_at(&gamma, i).abs() > HIR_ETA_CAP) {
            return Err(Error::Infeasible(
                "balancing weights diverge: no overlap between arms in some direction".into(),
            ));
        }
        g = grad(&gamma);
    }

    let mut r = vec![0.0; data.len()];
    for &i in &untreated {
        r[i] = eta_at(&gamma, i).exp();
    }
    let pi_breve: Vec<f64> = (0..data.len()).map(|i| expit(eta_at(&gamma, i))).collect();
    let balance_residual = design
        .columns()
        .map(|c| {
            let lhs: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum();
            let rhs: f64 = c.iter().zip(t).map(|(a, b)| a * b).sum();
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max);
    let raw_scale = design
        .columns()
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / n).sqrt())
        .fold(1.0f64, f64::max);
    if balance_residual / n > 1e-8 * raw_scale {
        return Err(Error::Infeasible(format!(
            "balancing equations stalled with residual {balance_residual:.3e}"
        )));
    }
    // Back to the original columns: gamma_j / sd_j, with the centring folded into the constant.
    let mut coef = vec![0.0; full.ncols()];
    let mut offset = 0.0;
    for ((&j, b), (m, sd)) in retained.iter().zip(&gamma).zip(&shift) {
        coef[j] = b / sd;
        offset -= b * m / sd;
    }
    if let Some(jc) = const_col {
        coef[retained[jc]] += offset / design.column(jc)[0];
    }
    Ok(HirWeights {
        gamma: coef,
        r,
        pi_breve,
        balance_residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_rows() -> Dataset {
        Dataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 1.0, 0.0, 0.0], vec![]).unwrap()
    }

    #[test]
    fn ipw_on_four_rows() {
        let d = four_rows();
        let pi = [0.5, 0.8, 0.2, 0.5];
        // untreated weights 0.25 and 1
        let num = 0.25 * 3.0 + 1.0 * 4.0;
        assert!((nu0_ipw(&pi, &d, false).unwrap() - num / 2.0).abs() < 1e-15);
        assert!((nu0_ipw(&pi, &d, true).unwrap() - num / 1.25).abs() < 1e-15);
    }

    #[test]
    fn aipw_collapses_for_constant_outcome() {
        let d = Dataset::new(vec![3.0; 4], vec![1.0, 1.0, 0.0, 0.0], vec![]).unwrap();
        let pi = [0.5, 0.8, 0.2, 0.5];
        let v = nu0_aipw(&pi, &[3.0; 4], &d, AipwFlavor::Np).unwrap();
        assert!((v - 3.0).abs() < 1e-14);
        assert!((nu0_ipw(&pi, &d, true).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn intercept_only_ipw_is_untreated_mean() {
        let d = four_rows();
        let pi = [0.5; 4];
        assert!((nu0_ipw(&pi, &d, false).unwrap() - 3.5).abs() < 1e-14);
    }

    #[test]
    fn sp_nu1_with_share_scores_is_treated_mean() {
        let d = four_rows();
        let v = nu1_aipw_sp(&[0.5; 4], &[7.0; 4], &d).unwrap();
        assert!((v - nu1_np(&d).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn hir_intercept_only_is_share_ratio() {
        let d = Dataset::new(
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![1.0, 1.0, 0.0, 0.0, 0.0],
            vec![],
        )
        .unwrap();
        let w = hir_weights(&d, &RegressorSpec::intercept_only()).unwrap();
        for i in 2..5 {
            assert!((w.r[i] - 2.0 / 3.0).abs() < 1e-14);
        }
        assert!((nu0_ipw(&w.pi_breve, &d, false).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hir_balances_covariates() {
        let x = vec![0.3, -0.2, 1.1, 0.5, -0.9, 0.0, 1.4, -1.3, 0.7, 0.2];
        let t = vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let d = Dataset::new(vec![0.0; 10], t, vec![("x".into(), x)]).unwrap();
        let w = hir_weights(&d, &RegressorSpec::linear(&["x"])).unwrap();
        assert!(w.balance_residual < 1e-8);
        assert!((w.r.iter().sum::<f64>() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn hir_without_overlap_is_infeasible() {
        let x = vec![5.0, 6.0, 0.0, 1.0, 2.0];
        let t = vec![1.0, 1.0, 0.0, 0.0, 0.0];
        let d = Dataset::new(vec![0.0; 5], t, vec![("x".into(), x)]).unwrap();
        assert!(matches!(
            hir_weights(&d, &RegressorSpec::linear(&["x"])),
            Err(Error::Infeasible(_))
        ));
    }
}
