use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::regressors::{build_regressors, RegressorSpec};
use crate::dataio::Dataset;
use crate::error::Result;
use crate::numkernel::{
    fit_binary, BinaryFit, BinaryFitOptions, BinaryLink, DesignMatrix, LinkEval, Logit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logistic,
    Probit,
}

impl Link {
    pub fn as_binary(self) -> &'static dyn BinaryLink {
        match self {
            Link::Logistic => &Logit,
            Link::Probit => &Probit,
        }
    }
}

/// Standard normal CDF as inverse link.
#[derive(Debug, Clone, Copy, Default)]
pub struct Probit;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl BinaryLink for Probit {
    fn eval(&self, eta: f64) -> LinkEval {
        let p = 0.5 * erfc(-eta / std::f64::consts::SQRT_2);
        let q = 0.5 * erfc(eta / std::f64::consts::SQRT_2);
        LinkEval {
            p,
            q,
            dp: FRAC_1_SQRT_2PI * (-0.5 * eta * eta).exp(),
            log_p: p.ln(),
            log_q: q.ln(),
        }
    }

    fn name(&self) -> &'static str {
        "probit"
    }
}

/// Fitted propensity score model `P(T=1|X) = link(gamma' f(X))`.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub spec: RegressorSpec,
    pub link: Link,
    pub design: DesignMatrix,
    pub fit: BinaryFit,
    pub pi_hat: Vec<f64>,
}

impl PropensityFit {
    pub fn gamma(&self) -> &[f64] {
        &self.fit.coefficients
    }

    pub fn linear_predictor(&self) -> &[f64] {
        &self.fit.linear_predictor
    }

    /// `log{pi/(1-pi)}` of the fitted scores, computed from the link without cancellation.
    pub fn logit_pi(&self) -> Vec<f64> {
        match self.link {
            Link::Logistic => self.fit.linear_predictor.clone(),
            Link::Probit => self
                .fit
                .linear_predictor
                .iter()
                .map(|&e| {
                    let l = Probit.eval(e);
                    l.log_p - l.log_q
                })
                .collect(),
        }
    }

    /// `rho(X) = link'(eta) / {pi (1 - pi)}`; identically 1 for the logistic link.
    pub fn rho(&self) -> Vec<f64> {
        let link = self.link.as_binary();
        self.fit
            .linear_predictor
            .iter()
            .map(|&e| {
                let l = link.eval(e);
                l.dp / (l.p * l.q)
            })
            .collect()
    }
}

pub fn fit_ps(spec: &RegressorSpec, link: Link, data: &Dataset) -> Result<PropensityFit> {
    fit_ps_with(spec, link, data, &BinaryFitOptions::default())
}

pub fn fit_ps_with(
    spec: &RegressorSpec,
    link: Link,
    data: &Dataset,
    opts: &BinaryFitOptions,
) -> Result<PropensityFit> {
    let design = build_regressors(spec, data)?;
    let fit = fit_binary(&design, data.t(), None, None, link.as_binary(), opts)?;
    Ok(PropensityFit {
        spec: spec.clone(),
        link,
        design,
        pi_hat: fit.fitted_probabilities.clone(),
        fit,
    })
}
