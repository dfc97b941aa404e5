//! Residuals of the estimating equations and identities, recomputed from the
//! fitted objects with plain loops. Each residual is scaled so that 1e-8 is a
//! meaningful bound whatever the units of the columns.

use calatt::el_solver::{maximize_ell, maximize_kappa};
use calatt::estimators::{build_tilde_h, hir_weights, nu_reg, HBlock};
use calatt::models::{fit_aug_ps, fit_or, fit_ps, AugVariant, Link, RegressorSpec};
use calatt::simulation::{gen_qin_zhang, OrSetting, QZ_MODERATE};
use calatt::Dataset;

fn avg(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

fn rms(c: &[f64]) -> f64 {
    (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt().max(1.0)
}

/// `max_j |E~[w a_j]| / rms(a_j)`
fn scaled_moment(w: &[f64], cols: &[Vec<f64>]) -> f64 {
    let n = w.len();
    cols.iter()
        .map(|c| avg(c.iter().zip(w).map(|(a, b)| a * b), n).abs() / rms(c))
        .fold(0.0, f64::max)
}

pub fn dataset(seed: u64) -> Dataset {
    let setting = if seed % 2 == 0 { OrSetting::Linear } else { OrSetting::Quadratic };
    gen_qin_zhang(300, QZ_MODERATE, setting, seed).unwrap()
}

/// Named residuals on one randomized dataset; an `Err` names the step that failed.
pub fn residuals(data: &Dataset) -> Result<Vec<(&'static str, f64)>, String> {
    let e = |s: &'static str| move |err: calatt::Error| format!("{s}: {err}");
    let n = data.len();
    let t = data.t();
    let lin = RegressorSpec::linear(&["x1", "x2"]);
    let quad = RegressorSpec::squares(&["x1", "x2"]);
    let mut out = Vec::new();

    // Score equation of the base model.
    let ps = fit_ps(&quad, Link::Logistic, data).map_err(e("ps"))?;
    let f_cols: Vec<Vec<f64>> = ps.design.columns().map(<[f64]>::to_vec).collect();
    let u: Vec<f64> = (0..n).map(|i| t[i] - ps.pi_hat[i]).collect();
    out.push(("score equation", scaled_moment(&u, &f_cols)));

    // Augmentation identities for both augmented variants.
    let or0 = fit_or(&lin, data, 0).map_err(e("or0"))?;
    let or1 = fit_or(&lin, data, 1).map_err(e("or1"))?;
    let m = vec![or0.m_hat.clone(), or1.m_hat.clone()];
    let full = fit_aug_ps(&ps, &or0, &or1, data, AugVariant::Full, None).map_err(e("full"))?;
    let off = fit_aug_ps(&ps, &or0, &or1, data, AugVariant::Offset, None).map_err(e("offset"))?;
    for (name, aug) in [("augmentation identity (full)", &full), ("augmentation identity (offset)", &off)] {
        let u: Vec<f64> = (0..n).map(|i| t[i] - aug.tilde_pi[i]).collect();
        out.push((name, scaled_moment(&u, &m)));
    }

    // First-stage stationarity and the equal denominators at lambda_hat.
    let pi = &full.tilde_pi;
    let (th, cv) = build_tilde_h(&full, &or0, &or1, data, true, None).map_err(e("h"))?;
    let st = maximize_ell(pi, &th, t).map_err(e("first stage"))?;
    let w = &st.omega;
    let g: Vec<f64> = (0..n).map(|i| (t[i] - w[i]) / (w[i] * (1.0 - w[i]))).collect();
    out.push(("first-stage stationarity", scaled_moment(&g, &th.columns)));
    let d1 = avg((0..n).map(|i| t[i] * pi[i] / w[i]), n);
    let d0 = avg((0..n).map(|i| (1.0 - t[i]) * pi[i] / (1.0 - w[i])), n);
    out.push(("equal denominators", (d1 - d0).abs()));

    // Second-stage stationarity over the refitted block.
    for arm in [0u8, 1] {
        let k = maximize_kappa(&st, &th, pi, t, arm).map_err(e("second stage"))?;
        let block = th.block_indices(if arm == 1 { HBlock::Treated } else { HBlock::Untreated });
        let v: Vec<Vec<f64>> = block
            .iter()
            .map(|&j| {
                (0..n)
                    .map(|i| th.columns[j][i] / if arm == 1 { 1.0 - pi[i] } else { pi[i] })
                    .collect()
            })
            .collect();
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let same = if arm == 1 { t[i] } else { 1.0 - t[i] };
                same / k.omega_t[i] - 1.0
            })
            .collect();
        out.push((
            if arm == 1 { "second-stage stationarity (t=1)" } else { "second-stage stationarity (t=0)" },
            scaled_moment(&r, &v),
        ));
    }

    // Calibration of the regression estimator: Y := m_t reproduces E~(pi~ m_t).
    for arm in [0u8, 1] {
        let mt = &m[arm as usize];
        let dm = data.with_outcome(mt.clone()).map_err(e("outcome swap"))?;
        let (_, cvm) = build_tilde_h(&full, &or0, &or1, &dm, true, None).map_err(e("h"))?;
        let q = data.treated_share();
        let got = nu_reg(&cvm, arm).map_err(e("reg"))?.nu * q;
        let want = avg(pi.iter().zip(mt).map(|(p, v)| p * v), n);
        out.push((
            if arm == 1 { "regression calibration (t=1)" } else { "regression calibration (t=0)" },
            (got - want).abs() / rms(mt),
        ));
    }

    // xi~_0 = -xi~_1.
    let xi0 = cv.xi0();
    let sym = cv
        .xi
        .iter()
        .zip(&xi0)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y).abs()))
        .fold(0.0, f64::max);
    out.push(("control-variate symmetry", sym));

    // Balancing equations.
    let hw = hir_weights(data, &lin).map_err(e("balancing"))?;
    let lin_cols: Vec<Vec<f64>> = calatt::models::build_regressors(&lin, data)
        .map_err(e("regressors"))?
        .columns()
        .map(<[f64]>::to_vec)
        .collect();
    let bal: Vec<f64> = (0..n).map(|i| (1.0 - t[i]) * hw.r[i] - t[i]).collect();
    out.push(("balancing equations", scaled_moment(&bal, &lin_cols)));

    // Linear outcome regressions inside a linear propensity model: no augmentation.
    let ps_lin = fit_ps(&lin, Link::Logistic, data).map_err(e("ps"))?;
    let col = fit_aug_ps(&ps_lin, &or0, &or1, data, AugVariant::Full, None).map_err(e("collapse"))?;
    let gap = if col.collapsed_to_base {
        col.tilde_pi
            .iter()
            .zip(&ps_lin.pi_hat)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    out.push(("collapse to the base model", gap));
    Ok(out)
}
