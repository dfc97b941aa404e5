use super::regressors::{build_regressors, RegressorSpec};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numkernel::{solve_least_squares, DEFAULT_RANK_TOL};

/// Linear outcome regression fitted within one treatment arm and predicted on all rows.
#[derive(Debug, Clone)]
pub struct OutcomeFit {
    pub group: u8,
    pub spec: RegressorSpec,
    pub coefficients: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub dropped_columns: Vec<String>,
}

/// Least squares of Y on `g_t(X)` over rows with `T == t` (identity link).
pub fn fit_or(spec: &RegressorSpec, data: &Dataset, t: u8) -> Result<OutcomeFit> {
    if t > 1 {
        return Err(Error::invalid("treatment arm must be 0 or 1"));
    }
    let rows = data.arm_rows(t);
    if rows.is_empty() {
        return Err(Error::invalid(format!("no rows with T = {t}")));
    }
    let design = build_regressors(spec, data)?;
    let sub = design.select_rows(&rows)?;
    let y: Vec<f64> = rows.iter().map(|&i| data.y()[i]).collect();
    let ls = solve_least_squares(&sub, &y, DEFAULT_RANK_TOL)?;
    Ok(OutcomeFit {
        group: t,
        spec: spec.clone(),
        m_hat: design.mul_vec(&ls.coefficients),
        coefficients: ls.coefficients,
        dropped_columns: ls.dropped_columns,
    })
}
