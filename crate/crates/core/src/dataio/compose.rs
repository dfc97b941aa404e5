use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Which experimental arm plays the treated group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Experimental treatment group: effect estimation.
    Treatment,
    /// Experimental control group: evaluation-bias estimation.
    Control,
}

impl Arm {
    fn t_value(self) -> f64 {
        match self {
            Arm::Treatment => 1.0,
            Arm::Control => 0.0,
        }
    }
}

/// Stacks the chosen experimental arm (as `T = 1`) on top of the comparison sample
/// (as `T = 0`). Covariates are matched by name in the order of `experimental`.
pub fn compose_analysis(experimental: &Dataset, comparison: &Dataset, arm: Arm) -> Result<Dataset> {
    let rows: Vec<usize> = (0..experimental.len())
        .filter(|&i| experimental.t()[i] == arm.t_value())
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid(format!("experimental {arm:?} arm is empty")));
    }
    if comparison.is_empty() {
        return Err(Error::invalid("comparison sample is empty"));
    }
    let n = rows.len() + comparison.len();
    let mut y = Vec::with_capacity(n);
    let mut prov = Vec::with_capacity(n);
    for &i in &rows {
        y.push(experimental.y()[i]);
        prov.push(experimental.provenance()[i].clone());
    }
    y.extend_from_slice(comparison.y());
    prov.extend(comparison.provenance().iter().cloned());
    let mut t = vec![1.0; rows.len()];
    t.extend(std::iter::repeat_n(0.0, comparison.len()));
    let mut covs = Vec::new();
    for (name, col) in experimental.covariates() {
        let other = comparison
            .covariate(name)
            .ok_or_else(|| Error::structural(format!("comparison sample lacks covariate '{name}'")))?;
        let mut c: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
        c.extend_from_slice(other);
        covs.push((name.to_string(), c));
    }
    Dataset::with_provenance(y, t, covs, prov)
}
