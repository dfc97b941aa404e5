use serde::{Deserialize, Serialize};

use super::outcome::OutcomeFit;
use super::propensity::{Link, PropensityFit};
use super::regressors::{build_regressors, RegressorSpec};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numkernel::{
    detect_redundancy, fit_logistic, BinaryFitOptions, ColumnKind, ColumnLabel, DesignMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugVariant {
    /// Logistic on `(f, m0_hat, m1_hat)`.
    Full,
    /// Logistic on `(1, m0_hat, m1_hat)` with offset `logit(pi_hat)`.
    Offset,
    /// Logistic on `(1, c0_(1), c1_(1))` with offset `logit(pi_hat)`.
    Calibrated,
    /// Non-logistic link: `link(gamma'f + rho^-1 (gamma0 + delta0 m0_hat + delta1 m1_hat))`.
    General,
}

/// Propensity model enlarged with the fitted outcome regressions.
#[derive(Debug, Clone)]
pub struct AugmentedPsFit {
    pub variant: AugVariant,
    /// Regressors of the base propensity model, `f(X)`.
    pub f: DesignMatrix,
    /// Columns of the augmented fit before redundancy elimination.
    pub design: DesignMatrix,
    pub offset: Option<Vec<f64>>,
    /// One per design column, 0 for dropped columns.
    pub coefficients: Vec<f64>,
    pub retained: Vec<usize>,
    /// Coefficients on the augmentation columns (the `delta` block).
    pub delta: Vec<f64>,
    pub tilde_pi: Vec<f64>,
    /// Both fitted regressions were linear in `f(X)`; the base fit is returned unchanged.
    pub collapsed_to_base: bool,
    pub iterations: usize,
    /// `|E~[(T - pi~) m_t_hat]|` for t = 0, 1.
    pub augmentation_residuals: [f64; 2],
    /// `c_0(X)` and `c_1(X)` of the calibrated variant, constant included.
    pub calibration_targets: Option<[DesignMatrix; 2]>,
    /// `rho_hat(X)` of a non-logistic base fit; the estimating equations use `rho_hat * design`.
    pub rho: Option<Vec<f64>>,
}

impl AugmentedPsFit {
    /// `max_j |E~[(T - pi~) a_j]|` over the estimating-equation columns (raw sample averages).
    pub fn max_score_residual(&self, t: &[f64]) -> f64 {
        self.retained
            .iter()
            .map(|&j| {
                let col = self.design.column(j);
                match &self.rho {
                    Some(r) => {
                        let u: Vec<f64> = col.iter().zip(r).map(|(a, b)| a * b).collect();
                        score_average(t, &self.tilde_pi, &u)
                    }
                    None => score_average(t, &self.tilde_pi, col),
                }
                .abs()
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn score_average(t: &[f64], p: &[f64], a: &[f64]) -> f64 {
    let n = t.len() as f64;
    t.iter()
        .zip(p)
        .zip(a)
        .map(|((ti, pi), ai)| (ti - pi) * ai)
        .sum::<f64>()
        / n
}

pub(crate) fn fitted_column(name: &str, v: &[f64]) -> (ColumnLabel, Vec<f64>) {
    (ColumnLabel::new(name, ColumnKind::Fitted), v.to_vec())
}

pub(crate) fn check_inputs(ps: &PropensityFit, or0: &OutcomeFit, or1: &OutcomeFit, data: &Dataset) -> Result<()> {
    let n = data.len();
    if ps.pi_hat.len() != n || or0.m_hat.len() != n || or1.m_hat.len() != n {
        return Err(Error::structural("propensity and outcome fits must be on the same rows"));
    }
    if or0.group != 0 || or1.group != 1 {
        return Err(Error::invalid("outcome fits must be for arms 0 and 1, in that order"));
    }
    Ok(())
}

pub(crate) fn separation_advice(e: Error) -> Error {
    match e {
        Error::Separation { context, rows } => Error::Separation {
            context: format!("{context} of the augmented propensity model (the offset variant is more stable)"),
            rows,
        },
        other => other,
    }
}

/// Fits the augmented propensity model. For `Calibrated`, `c_specs` gives
/// `(c_0, c_1)`; when absent the outcome-regression specs are used.
pub fn fit_aug_ps(
    ps: &PropensityFit,
    or0: &OutcomeFit,
    or1: &OutcomeFit,
    data: &Dataset,
    variant: AugVariant,
    c_specs: Option<(&RegressorSpec, &RegressorSpec)>,
) -> Result<AugmentedPsFit> {
    check_inputs(ps, or0, or1, data)?;
    let opts = BinaryFitOptions::default();
    let t = data.t();
    let n = data.len();
    let mut calibration_targets = None;

    let (design, offset, n_base) = match variant {
        AugVariant::General => return super::general::fit_aug_ps_general(ps, or0, or1, data),
        AugVariant::Full if ps.link != Link::Logistic => {
            return super::general::fit_aug_ps_general(ps, or0, or1, data)
        }
        AugVariant::Full => {
            let d = ps.design.with_columns(vec![
                fitted_column("m0_hat", &or0.m_hat),
                fitted_column("m1_hat", &or1.m_hat),
            ])?;
            (d, None, ps.design.ncols())
        }
        AugVariant::Offset => {
            let d = DesignMatrix::from_columns(vec![
                (ColumnLabel::new("1", ColumnKind::Constant), vec![1.0; n]),
                fitted_column("m0_hat", &or0.m_hat),
                fitted_column("m1_hat", &or1.m_hat),
            ])?;
            (d, Some(ps.logit_pi()), 1)
        }
        AugVariant::Calibrated => {
            let (c0, c1) = c_specs.unwrap_or((&or0.spec, &or1.spec));
            let b0 = build_regressors(c0, data)?;
            let b1 = build_regressors(c1, data)?;
            let mut cols = vec![(ColumnLabel::new("1", ColumnKind::Constant), vec![1.0; n])];
            for (tag, b) in [("c0", &b0), ("c1", &b1)] {
                for (j, lab) in b.labels().iter().enumerate() {
                    if lab.kind != ColumnKind::Constant {
                        cols.push((
                            ColumnLabel::new(format!("{tag}:{}", lab.name), ColumnKind::Derived),
                            b.column(j).to_vec(),
                        ));
                    }
                }
            }
            calibration_targets = Some([b0, b1]);
            (DesignMatrix::from_columns(cols)?, Some(ps.logit_pi()), 1)
        }
    };

    let retained = detect_redundancy(&design, opts.rank_tol);
    let aug_retained = retained.iter().any(|&j| j >= n_base);
    let collapsed = variant == AugVariant::Full && !aug_retained;

    let (coefficients, tilde_pi, iterations) = if collapsed {
        let mut c = ps.gamma().to_vec();
        c.extend([0.0, 0.0]);
        (c, ps.pi_hat.clone(), 0)
    } else {
        let fit = fit_logistic(&design, t, offset.as_deref(), None, &opts).map_err(separation_advice)?;
        (fit.coefficients, fit.fitted_probabilities, fit.iterations)
    };
    let delta = coefficients[n_base..].to_vec();
    let augmentation_residuals = [
        score_average(t, &tilde_pi, &or0.m_hat),
        score_average(t, &tilde_pi, &or1.m_hat),
    ];
    Ok(AugmentedPsFit {
        variant,
        f: ps.design.clone(),
        design,
        offset,
        coefficients,
        retained,
        delta,
        tilde_pi,
        collapsed_to_base: collapsed,
        iterations,
        augmentation_residuals,
        calibration_targets,
        rho: None,
    })
}
