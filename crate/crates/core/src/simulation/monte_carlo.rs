use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::designs::SimDesign;
use crate::error::{Error, Result};
use crate::estimators::{evaluate_cell, CellSpec, EstimatorKind};

/// Generator for replicate `index`: the master seed selects the key, the index the stream.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Sample variance with divisor `count - 1`; NaN below two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Summary of one estimator in one (PS, OR) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub ps: String,
    pub or: String,
    pub estimator: EstimatorKind,
    /// Replicates with an estimate.
    pub replicates: usize,
    pub failures: usize,
    pub mean: f64,
    /// `mean - true_att`
    pub bias: f64,
    pub variance: f64,
    pub mc_se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

/// One estimate from one replicate; `att` is absent when the estimator failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub replicate: usize,
    pub cell: String,
    pub estimator: EstimatorKind,
    pub att: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub design: SimDesign,
    pub seed: u64,
    pub replicates: usize,
    pub true_att: f64,
    pub estimators: Vec<EstimatorKind>,
    pub cells: Vec<CellSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimates: Vec<ReplicateEstimate>,
}

impl MonteCarloReport {
    pub fn summary(&self, cell: &str, estimator: EstimatorKind) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == cell && c.estimator == estimator)
    }

    /// Per-replicate ATT estimates of one cell, failures skipped.
    pub fn values(&self, cell: &str, estimator: EstimatorKind) -> Vec<f64> {
        self.estimates
            .iter()
            .filter(|e| e.cell == cell && e.estimator == estimator)
            .filter_map(|e| e.att)
            .collect()
    }

    /// Rows are cells, columns `<EST>_bias`, `<EST>_var`, `<EST>_fail` per estimator.
    pub fn write_wide_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["cell".to_string(), "ps".into(), "or".into()];
        for k in &self.estimators {
            header.push(format!("{k}_bias"));
            header.push(format!("{k}_var"));
            header.push(format!("{k}_fail"));
        }
        w.write_record(&header)?;
        let mut seen: Vec<&str> = Vec::new();
        for c in &self.cells {
            if seen.contains(&c.cell.as_str()) {
                continue;
            }
            seen.push(&c.cell);
            let mut row = vec![c.cell.clone(), c.ps.clone(), c.or.clone()];
            for &k in &self.estimators {
                match self.summary(&c.cell, k) {
                    Some(s) => {
                        row.push(fmt_num(s.bias));
                        row.push(fmt_num(s.variance));
                        row.push(s.failures.to_string());
                    }
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per (replicate, cell, estimator): `replicate,cell,estimator,att,error`.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "cell", "estimator", "att", "error"])?;
        for e in &self.estimates {
            w.write_record([
                e.replicate.to_string(),
                e.cell.clone(),
                e.estimator.to_string(),
                e.att.map(fmt_num).unwrap_or_default(),
                e.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal form; `NaN` for undefined moments.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

/// Options of [`run_monte_carlo`].
#[derive(Debug, Clone, Default)]
pub struct MonteCarloOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Keep every per-replicate estimate in the report.
    pub keep_estimates: bool,
}

/// Runs `replicates` independent draws of `design` and evaluates every estimator in
/// every cell. Replicate `r` uses stream `r` of the master seed, and the summaries
/// are accumulated in replicate order, so the report does not depend on scheduling.
pub fn run_monte_carlo(
    design: &SimDesign,
    replicates: usize,
    estimators: &[EstimatorKind],
    grid: &[CellSpec],
    seed: u64,
    options: &MonteCarloOptions,
) -> Result<MonteCarloReport> {
    design.validate()?;
    if estimators.is_empty() {
        return Err(Error::invalid("no estimators requested"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty model grid"));
    }
    let labels: Vec<String> = grid.iter().map(CellSpec::label).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::invalid(format!("duplicate grid cell '{l}'")));
        }
    }

    let one = |r: usize| -> Vec<Vec<std::result::Result<f64, String>>> {
        let mut rng = replicate_rng(seed, r as u64);
        match design.generate(&mut rng) {
            Ok(data) => grid
                .iter()
                .map(|cell| {
                    evaluate_cell(&data, cell, estimators)
                        .into_iter()
                        .map(|(_, res)| res.map(|o| o.att))
                        .collect()
                })
                .collect(),
            Err(e) => vec![vec![Err(format!("data generation: {e}")); estimators.len()]; grid.len()],
        }
    };
    let per_rep: Vec<_> = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?
            .install(|| (0..replicates).into_par_iter().map(one).collect()),
        None => (0..replicates).into_par_iter().map(one).collect(),
    };

    let true_att = design.true_att();
    let mut cells = Vec::with_capacity(grid.len() * estimators.len());
    let mut estimates = Vec::new();
    for (c, cell) in grid.iter().enumerate() {
        for (k, &kind) in estimators.iter().enumerate() {
            let mut m = Moments::default();
            let mut failures = 0;
            let mut first_failure = None;
            for (r, rep) in per_rep.iter().enumerate() {
                let res = &rep[c][k];
                match res {
                    Ok(v) if v.is_finite() => m.push(*v),
                    Ok(v) => {
                        failures += 1;
                        first_failure.get_or_insert_with(|| format!("non-finite estimate {v}"));
                    }
                    Err(e) => {
                        failures += 1;
                        first_failure.get_or_insert_with(|| e.clone());
                    }
                }
                if options.keep_estimates {
                    estimates.push(ReplicateEstimate {
                        replicate: r,
                        cell: labels[c].clone(),
                        estimator: kind,
                        att: res.as_ref().ok().copied().filter(|v| v.is_finite()),
                        error: res.as_ref().err().cloned(),
                    });
                }
            }
            cells.push(CellSummary {
                cell: labels[c].clone(),
                ps: cell.ps.name.clone(),
                or: cell.or.name.clone(),
                estimator: kind,
                replicates: m.count,
                failures,
                mean: if m.count > 0 { m.mean } else { f64::NAN },
                bias: if m.count > 0 { m.mean - true_att } else { f64::NAN },
                variance: m.variance(),
                mc_se: m.std_error(),
                first_failure,
            });
        }
    }
    Ok(MonteCarloReport {
        design: design.clone(),
        seed,
        replicates,
        true_att,
        estimators: estimators.to_vec(),
        cells,
        estimates,
    })
}
