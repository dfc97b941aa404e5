use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compose::{compose_analysis, Arm};
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{evaluate_cell, CellSpec, EstimatorKind};
use crate::models::{build_regressors, RegressorSpec};
use crate::numkernel::pca_filter;
use crate::simulation::{replicate_rng, Moments};

/// Preset variance ratio of the principal-component pre-filter.
pub const PCA_RATIO_PRESET: f64 = 0.09;

#[derive(Debug, Clone, Default)]
pub struct BootstrapOptions {
    pub workers: Option<usize>,
    /// Drop principal components with variance below this fraction of the largest.
    pub pca_ratio: Option<f64>,
    /// Experimental benchmark `(estimate, standard error)` to print alongside.
    pub benchmark: Option<(f64, f64)>,
    pub keep_draws: bool,
}

/// Mean and standard deviation over resamples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl From<&Moments> for MeanSe {
    fn from(m: &Moments) -> Self {
        Self {
            mean: if m.count > 0 { m.mean } else { f64::NAN },
            se: m.variance().sqrt(),
            count: m.count,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapCell {
    pub cell: String,
    pub ps: String,
    pub or: String,
    pub estimator: EstimatorKind,
    /// Analysis (i): experimental treatment group against the comparison sample.
    pub effect: MeanSe,
    /// Analysis (ii): experimental control group against the comparison sample.
    pub bias: MeanSe,
    /// `effect - bias` within each resample where both succeeded.
    pub difference: MeanSe,
    pub failures_effect: usize,
    pub failures_bias: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraw {
    pub resample: usize,
    pub cell: String,
    pub estimator: EstimatorKind,
    pub effect: Option<f64>,
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub resamples: usize,
    pub seed: u64,
    pub pca_ratio: Option<f64>,
    /// Retained components per regressor spec when the pre-filter is on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pca_components: Vec<(String, usize)>,
    pub benchmark: Option<(f64, f64)>,
    pub estimators: Vec<EstimatorKind>,
    pub cells: Vec<BootstrapCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub draws: Vec<BootstrapDraw>,
}

impl BootstrapReport {
    pub fn cell(&self, cell: &str, estimator: EstimatorKind) -> Option<&BootstrapCell> {
        self.cells.iter().find(|c| c.cell == cell && c.estimator == estimator)
    }

    /// Columns `cell,ps,or,estimator,effect_mean,effect_se,bias_mean,bias_se,difference_mean,difference_se,pairs,failures_effect,failures_bias`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "cell",
            "ps",
            "or",
            "estimator",
            "effect_mean",
            "effect_se",
            "bias_mean",
            "bias_se",
            "difference_mean",
            "difference_se",
            "pairs",
            "failures_effect",
            "failures_bias",
        ])?;
        let f = crate::simulation::fmt_num;
        for c in &self.cells {
            w.write_record([
                c.cell.clone(),
                c.ps.clone(),
                c.or.clone(),
                c.estimator.to_string(),
                f(c.effect.mean),
                f(c.effect.se),
                f(c.bias.mean),
                f(c.bias.se),
                f(c.difference.mean),
                f(c.difference.se),
                c.difference.count.to_string(),
                c.failures_effect.to_string(),
                c.failures_bias.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pool of experimental treatment (group 0), experimental control (1) and comparison (2) rows.
struct Pool {
    data: Dataset,
    group: Vec<u8>,
}

fn build_pool(experimental: &Dataset, comparison: &Dataset) -> Result<Pool> {
    let tr = compose_analysis(experimental, comparison, Arm::Treatment)?;
    let n1 = experimental.n_treated();
    let ctrl_rows = experimental.arm_rows(0);
    if ctrl_rows.is_empty() {
        return Err(Error::invalid("experimental control arm is empty"));
    }
    // Append the control rows to the analysis (i) composite; T is rewritten per analysis.
    let ctrl = experimental.select_rows(&ctrl_rows)?;
    let mut y = tr.y().to_vec();
    y.extend_from_slice(ctrl.y());
    let mut t = tr.t().to_vec();
    t.extend(std::iter::repeat_n(0.0, ctrl.len()));
    let mut prov = tr.provenance().to_vec();
    prov.extend(ctrl.provenance().iter().cloned());
    let covs = tr
        .covariates()
        .map(|(name, col)| {
            let mut c = col.to_vec();
            c.extend_from_slice(ctrl.covariate(name).expect("same covariates"));
            (name.to_string(), c)
        })
        .collect();
    let data = Dataset::with_provenance(y, t, covs, prov)?;
    let mut group = vec![0u8; n1];
    group.extend(std::iter::repeat_n(2u8, comparison.len()));
    group.extend(std::iter::repeat_n(1u8, ctrl.len()));
    Ok(Pool { data, group })
}

/// Rows of `idx` that belong to the analysis, with `T` set for it.
fn analysis(pool: &Pool, idx: &[usize], arm: Arm) -> Result<Dataset> {
    let g1 = if arm == Arm::Treatment { 0 } else { 1 };
    let rows: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| pool.group[i] == g1 || pool.group[i] == 2)
        .collect();
    let d = pool.data.select_rows(&rows)?;
    let t = rows.iter().map(|&i| if pool.group[i] == g1 { 1.0 } else { 0.0 }).collect();
    let d = d.with_treatment(t)?;
    if d.n_treated() == 0 || d.n_untreated() == 0 {
        return Err(Error::invalid("resample lacks one of the analysis groups"));
    }
    Ok(d)
}

/// Replaces each spec by a linear spec on its retained principal components,
/// fitted once on the full pool. Returns the new grid and the component counts.
fn apply_pca(pool: &mut Pool, grid: &[CellSpec], ratio: f64) -> Result<(Vec<CellSpec>, Vec<(String, usize)>)> {
    let mut done: Vec<(String, RegressorSpec)> = Vec::new();
    let mut counts = Vec::new();
    let mut reduce = |spec: &RegressorSpec, pool: &mut Pool| -> Result<RegressorSpec> {
        if let Some((_, s)) = done.iter().find(|(n, _)| *n == spec.name) {
            return Ok(s.clone());
        }
        let design = build_regressors(spec, &pool.data)?;
        let (scores, tf) = pca_filter(&design, ratio, true)?;
        let names: Vec<String> = (1..=tf.n_components()).map(|j| format!("{}.pc{j}", spec.name)).collect();
        pool.data = pool
            .data
            .with_covariates(names.iter().cloned().zip(scores.columns().map(<[f64]>::to_vec)).collect())?;
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let reduced = RegressorSpec::linear(&refs).named(spec.name.clone());
        counts.push((spec.name.clone(), tf.n_components()));
        done.push((spec.name.clone(), reduced.clone()));
        Ok(reduced)
    };
    let mut out = Vec::with_capacity(grid.len());
    for c in grid {
        let ps = reduce(&c.ps, pool)?;
        let or = reduce(&c.or, pool)?;
        out.push(CellSpec { ps, or, link: c.link });
    }
    Ok((out, counts))
}

type Estimates = Vec<Vec<Option<f64>>>;

/// Paired bootstrap of Analyses (i) and (ii). Each resample draws rows with
/// replacement from the whole pool (experimental treatment, experimental control and
/// comparison) and runs both analyses on it.
pub fn bootstrap_analysis(
    experimental: &Dataset,
    comparison: &Dataset,
    grid: &[CellSpec],
    estimators: &[EstimatorKind],
    resamples: usize,
    seed: u64,
    options: &BootstrapOptions,
) -> Result<BootstrapReport> {
    if resamples == 0 {
        return Err(Error::invalid("resamples must be positive"));
    }
    if estimators.is_empty() || grid.is_empty() {
        return Err(Error::invalid("empty estimator list or model grid"));
    }
    let mut pool = build_pool(experimental, comparison)?;
    let (grid, pca_components) = match options.pca_ratio {
        Some(r) => apply_pca(&mut pool, grid, r)?,
        None => (grid.to_vec(), Vec::new()),
    };
    let n = pool.data.len();
    let run_arm = |idx: &[usize], arm: Arm| -> Estimates {
        match analysis(&pool, idx, arm) {
            Ok(d) => grid
                .iter()
                .map(|cell| {
                    evaluate_cell(&d, cell, estimators)
                        .into_iter()
                        .map(|(_, r)| r.ok().map(|o| o.att).filter(|v| v.is_finite()))
                        .collect()
                })
                .collect(),
            Err(_) => vec![vec![None; estimators.len()]; grid.len()],
        }
    };
    let one = |b: usize| -> (Estimates, Estimates) {
        let mut rng = replicate_rng(seed, b as u64);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        (run_arm(&idx, Arm::Treatment), run_arm(&idx, Arm::Control))
    };
    let per: Vec<(Estimates, Estimates)> = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?
            .install(|| (0..resamples).into_par_iter().map(one).collect()),
        None => (0..resamples).into_par_iter().map(one).collect(),
    };

    let mut cells = Vec::new();
    let mut draws = Vec::new();
    for (c, cell) in grid.iter().enumerate() {
        for (k, &kind) in estimators.iter().enumerate() {
            let (mut me, mut mb, mut md) = (Moments::default(), Moments::default(), Moments::default());
            let (mut fe, mut fb) = (0, 0);
            for (b, (eff, bias)) in per.iter().enumerate() {
                let (e, bi) = (eff[c][k], bias[c][k]);
                match e {
                    Some(v) => me.push(v),
                    None => fe += 1,
                }
                match bi {
                    Some(v) => mb.push(v),
                    None => fb += 1,
                }
                if let (Some(e), Some(bi)) = (e, bi) {
                    md.push(e - bi);
                }
                if options.keep_draws {
                    draws.push(BootstrapDraw {
                        resample: b,
                        cell: cell.label(),
                        estimator: kind,
                        effect: e,
                        bias: bi,
                    });
                }
            }
            cells.push(BootstrapCell {
                cell: cell.label(),
                ps: cell.ps.name.clone(),
                or: cell.or.name.clone(),
                estimator: kind,
                effect: MeanSe::from(&me),
                bias: MeanSe::from(&mb),
                difference: MeanSe::from(&md),
                failures_effect: fe,
                failures_bias: fb,
            });
        }
    }
    if cells.iter().all(|c| c.difference.count == 0) {
        return Err(Error::Infeasible("every bootstrap resample failed".into()));
    }
    Ok(BootstrapReport {
        resamples,
        seed,
        pca_ratio: options.pca_ratio,
        pca_components,
        benchmark: options.benchmark,
        estimators: estimators.to_vec(),
        cells,
        draws,
    })
}
