//! All requested estimators for one (PS spec, OR spec) combination, sharing fits.

use super::basic::{hir_weights, nu0_aipw, nu0_ipw, nu1_aipw_sp, nu1_np, nu_or, sp_denominator_gap, AipwFlavor};
use super::output::{EstimatorKind, EstimatorOutput};
use super::tilde_h::{build_tilde_h, nu_reg};
use crate::dataio::Dataset;
use crate::el_solver::lik_from_aug;
use crate::error::Result;
use crate::models::{fit_aug_ps, fit_or, fit_ps, AugVariant, AugmentedPsFit, Link, OutcomeFit, PropensityFit, RegressorSpec};

/// A propensity specification paired with an outcome specification (used for both arms).
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub ps: RegressorSpec,
    pub or: RegressorSpec,
    pub link: Link,
}

impl CellSpec {
    pub fn new(ps: RegressorSpec, or: RegressorSpec) -> Self {
        Self { ps, or, link: Link::Logistic }
    }

    /// `"<ps>/<or>"`, e.g. `linear/quadratic`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.ps.name, self.or.name)
    }
}

/// Result of one estimator; failures carry the solver message.
pub type CellEstimate = std::result::Result<EstimatorOutput, String>;

fn max_untreated_inverse(pi: &[f64], data: &Dataset) -> f64 {
    pi.iter()
        .zip(data.t())
        .filter(|(_, t)| **t == 0.0)
        .map(|(p, _)| 1.0 / (1.0 - p))
        .fold(0.0, f64::max)
}

struct Shared<'a> {
    data: &'a Dataset,
    cell: &'a CellSpec,
    nu1: Result<f64>,
    ps: Option<std::result::Result<PropensityFit, String>>,
    ors: Option<std::result::Result<(OutcomeFit, OutcomeFit), String>>,
    full: Option<std::result::Result<AugmentedPsFit, String>>,
    offset: Option<std::result::Result<AugmentedPsFit, String>>,
}

impl<'a> Shared<'a> {
    fn ps(&mut self) -> std::result::Result<&PropensityFit, String> {
        let (cell, data) = (self.cell, self.data);
        self.ps
            .get_or_insert_with(|| fit_ps(&cell.ps, cell.link, data).map_err(|e| format!("propensity fit: {e}")))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn ors(&mut self) -> std::result::Result<&(OutcomeFit, OutcomeFit), String> {
        let (cell, data) = (self.cell, self.data);
        self.ors
            .get_or_insert_with(|| {
                let both = || -> Result<(OutcomeFit, OutcomeFit)> { Ok((fit_or(&cell.or, data, 0)?, fit_or(&cell.or, data, 1)?)) };
                both().map_err(|e| format!("outcome fit: {e}"))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn aug(&mut self, variant: AugVariant) -> std::result::Result<&AugmentedPsFit, String> {
        let slot_filled = match variant {
            AugVariant::Offset => self.offset.is_some(),
            _ => self.full.is_some(),
        };
        if !slot_filled {
            let fitted = match (self.ps().cloned(), self.ors().cloned()) {
                (Ok(ps), Ok((o0, o1))) => fit_aug_ps(&ps, &o0, &o1, self.data, variant, None)
                    .map_err(|e| format!("augmented propensity fit: {e}")),
                (Err(e), _) | (_, Err(e)) => Err(e),
            };
            match variant {
                AugVariant::Offset => self.offset = Some(fitted),
                _ => self.full = Some(fitted),
            }
        }
        let slot = match variant {
            AugVariant::Offset => &self.offset,
            _ => &self.full,
        };
        slot.as_ref().expect("filled above").as_ref().map_err(Clone::clone)
    }
}

fn s<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn evaluate_one(sh: &mut Shared<'_>, kind: EstimatorKind) -> CellEstimate {
    let data = sh.data;
    let nu1 = sh.nu1.as_ref().map(|v| *v).map_err(|e| e.to_string());
    match kind {
        EstimatorKind::Or => {
            let (o0, o1) = sh.ors()?;
            Ok(EstimatorOutput::new(kind, s(nu_or(o0, data))?, s(nu_or(o1, data))?))
        }
        EstimatorKind::Ipw | EstimatorKind::IpwRatio => {
            let pi = &sh.ps()?.pi_hat;
            let nu0 = s(nu0_ipw(pi, data, kind == EstimatorKind::IpwRatio))?;
            Ok(EstimatorOutput::new(kind, nu0, nu1?)
                .with_diagnostic("max_inverse_one_minus_pi", max_untreated_inverse(pi, data)))
        }
        EstimatorKind::Aipw => {
            let pi = sh.ps()?.pi_hat.clone();
            let (o0, _) = sh.ors()?;
            let nu0 = s(nu0_aipw(&pi, &o0.m_hat, data, AipwFlavor::Np))?;
            Ok(EstimatorOutput::new(kind, nu0, nu1?)
                .with_diagnostic("max_inverse_one_minus_pi", max_untreated_inverse(&pi, data)))
        }
        EstimatorKind::AipwSp => {
            let pi = sh.ps()?.pi_hat.clone();
            let (o0, o1) = sh.ors()?;
            let nu0 = s(nu0_aipw(&pi, &o0.m_hat, data, AipwFlavor::Sp))?;
            let nu1 = s(nu1_aipw_sp(&pi, &o1.m_hat, data))?;
            Ok(EstimatorOutput::new(kind, nu0, nu1)
                .with_diagnostic("denominator_gap", sp_denominator_gap(&pi, data))
                .with_diagnostic("max_inverse_one_minus_pi", max_untreated_inverse(&pi, data)))
        }
        EstimatorKind::Reg | EstimatorKind::Reg2 => {
            let (variant, include_h2) = if kind == EstimatorKind::Reg {
                (AugVariant::Full, true)
            } else {
                (AugVariant::Offset, false)
            };
            let (o0, o1) = sh.ors()?.clone();
            let aug = sh.aug(variant)?;
            let (th, cv) = s(build_tilde_h(aug, &o0, &o1, data, include_h2, None))?;
            let r0 = s(nu_reg(&cv, 0))?;
            let r1 = s(nu_reg(&cv, 1))?;
            let mut out = EstimatorOutput::new(kind, r0.nu, r1.nu)
                .with_diagnostic("calibration_residual_0", r0.calibration_residual)
                .with_diagnostic("calibration_residual_1", r1.calibration_residual)
                .with_diagnostic("nu0_uncalibrated", r0.nu_uncalibrated)
                .with_diagnostic("nu1_uncalibrated", r1.nu_uncalibrated)
                .with_diagnostic("h_columns", th.ncols() as f64)
                .with_diagnostic("h_dropped", th.dropped.len() as f64)
                .with_diagnostic("collapsed_to_base", f64::from(u8::from(aug.collapsed_to_base)))
                .with_diagnostic("max_inverse_one_minus_pi", max_untreated_inverse(&aug.tilde_pi, data));
            if r0.singular || r1.singular {
                out.warn("near-singular control-variate moment matrix; minimum-norm solution used");
            }
            Ok(out)
        }
        EstimatorKind::Lik | EstimatorKind::Lik2 => {
            let (variant, include_h2) = if kind == EstimatorKind::Lik {
                (AugVariant::Full, true)
            } else {
                (AugVariant::Offset, false)
            };
            let (o0, o1) = sh.ors()?.clone();
            let aug = sh.aug(variant)?;
            let est = s(lik_from_aug(aug, &o0, &o1, data, include_h2))?;
            let mut out = EstimatorOutput::new(kind, est.nu0, est.nu1)
                .with_diagnostic("nu0_first_stage", est.nu0_hat)
                .with_diagnostic("nu1_first_stage", est.nu1_hat)
                .with_diagnostic("ell_gradient", est.ell_gradient)
                .with_diagnostic("kappa_residual_0", est.kappa_residuals[0])
                .with_diagnostic("kappa_residual_1", est.kappa_residuals[1])
                .with_diagnostic("form_gap_0", est.form_gaps[0])
                .with_diagnostic("form_gap_1", est.form_gaps[1])
                .with_diagnostic("iterations", est.iterations.iter().sum::<usize>() as f64)
                .with_diagnostic("collapsed_to_base", f64::from(u8::from(est.collapsed_to_base)))
                .with_diagnostic("max_inverse_one_minus_pi", max_untreated_inverse(&aug.tilde_pi, data));
            for w in est.warnings {
                out.warn(w);
            }
            Ok(out)
        }
        EstimatorKind::Hir | EstimatorKind::AipwHir => {
            let hw = s(hir_weights(data, &sh.cell.ps))?;
            let n1 = data.n_treated() as f64;
            let t = data.t();
            let y = data.y();
            let nu0 = if kind == EstimatorKind::Hir {
                (0..data.len()).map(|i| (1.0 - t[i]) * hw.r[i] * y[i]).sum::<f64>() / n1
            } else {
                let (o0, _) = sh.ors()?;
                // tau0 with pi/(1-pi) = r and 1/(1-pi) = 1 + r.
                (0..data.len())
                    .map(|i| {
                        let u = 1.0 - t[i];
                        u * hw.r[i] * y[i] - (u * (1.0 + hw.r[i]) - 1.0) * o0.m_hat[i]
                    })
                    .sum::<f64>()
                    / n1
            };
            Ok(EstimatorOutput::new(kind, nu0, nu1?)
                .with_diagnostic("balance_residual", hw.balance_residual)
                .with_diagnostic("max_weight", hw.r.iter().copied().fold(0.0, f64::max))
                .with_diagnostic("iterations", hw.iterations as f64))
        }
    }
}

/// Evaluates `kinds` on `data` for one cell. Shared fits are computed once; a
/// failing fit only fails the estimators that depend on it.
pub fn evaluate_cell(data: &Dataset, cell: &CellSpec, kinds: &[EstimatorKind]) -> Vec<(EstimatorKind, CellEstimate)> {
    let mut sh = Shared {
        data,
        cell,
        nu1: nu1_np(data),
        ps: None,
        ors: None,
        full: None,
        offset: None,
    };
    kinds.iter().map(|&k| (k, evaluate_one(&mut sh, k))).collect()
}
