use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use calatt::dataio::{bootstrap_analysis, load_csv, BootstrapOptions, BootstrapReport};
use calatt::estimators::evaluate_cell;
use calatt::simulation::{fmt_num, run_monte_carlo, MonteCarloOptions, MonteCarloReport};
use calatt::{EstimatorKind, EstimatorOutput};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Command, Format, Plan};

/// Provenance written at the top of every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config_sha256: String,
}

impl Header {
    fn new(plan: &Plan) -> Self {
        Self {
            tool: "calatt".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: plan.command,
            seed: plan.seed,
            config_sha256: plan.config_hash(),
        }
    }

    fn csv_lines(&self) -> String {
        format!(
            "# {} {} {}\n# seed={} config_sha256={}\n",
            self.tool,
            self.version,
            serde_json::to_value(self.command).unwrap().as_str().unwrap(),
            self.seed,
            self.config_sha256
        )
    }
}

/// A JSON report: provenance plus the command's result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document<T> {
    pub header: Header,
    pub report: T,
}

/// One estimator in one cell of `estimate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRow {
    pub cell: String,
    pub ps: String,
    pub or: String,
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<EstimatorOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub n_treated: usize,
    pub n_untreated: usize,
    pub rows: Vec<EstimateRow>,
}

/// Files written by a command.
pub struct Written {
    pub files: Vec<PathBuf>,
    pub failures: usize,
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(w) => Ok(rayon::ThreadPoolBuilder::new().num_threads(w).build()?.install(f)),
        None => Ok(f()),
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(f)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, header: &Header, report: &T) -> Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, &Document { header: header.clone(), report })?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

/// Writes a CSV preceded by the `#` header lines.
fn write_csv(
    dir: &Path,
    name: &str,
    header: &Header,
    extra: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    w.write_all(header.csv_lines().as_bytes())?;
    w.write_all(extra.as_bytes())?;
    body(&mut w)?;
    w.flush()?;
    Ok(path)
}

pub fn run(plan: &Plan) -> Result<Written> {
    std::fs::create_dir_all(&plan.out).with_context(|| format!("creating {}", plan.out.display()))?;
    match plan.command {
        Command::Simulate => simulate(plan),
        Command::Estimate => estimate(plan),
        Command::Bootstrap => bootstrap(plan),
    }
}

fn simulate(plan: &Plan) -> Result<Written> {
    let design = plan.design.as_ref().expect("resolved design");
    let opts = MonteCarloOptions {
        workers: plan.workers,
        keep_estimates: plan.long_output,
    };
    let report: MonteCarloReport = run_monte_carlo(
        design,
        plan.replicates.expect("resolved replicates"),
        &plan.estimators,
        &plan.cells,
        plan.seed,
        &opts,
    )?;
    let header = Header::new(plan);
    let dir = &plan.out;
    let mut files = Vec::new();
    match plan.format {
        Format::Json => files.push(write_json(dir, "simulate_report.json", &header, &report)?),
        Format::Csv => {
            let truth = format!("# design={} true_att={}\n", design.label(), fmt_num(report.true_att));
            files.push(write_csv(dir, "simulate_summary.csv", &header, &truth, |w| {
                Ok(report.write_wide_csv(w)?)
            })?);
            if plan.long_output {
                files.push(write_csv(dir, "simulate_replicates.csv", &header, "", |w| {
                    Ok(report.write_long_csv(w)?)
                })?);
            }
        }
    }
    Ok(Written {
        files,
        failures: report.cells.iter().map(|c| c.failures).sum(),
    })
}

fn estimate(plan: &Plan) -> Result<Written> {
    let schema = plan.schema.as_ref().expect("resolved schema");
    let path = &plan.inputs[0];
    let data = load_csv(path, schema).with_context(|| format!("loading {}", path.display()))?;
    let per_cell = with_pool(plan.workers, || {
        plan.cells
            .par_iter()
            .map(|c| evaluate_cell(&data, c, &plan.estimators))
            .collect::<Vec<_>>()
    })?;
    let mut rows = Vec::new();
    for (cell, results) in plan.cells.iter().zip(per_cell) {
        for (kind, res) in results {
            let (output, error) = match res {
                Ok(o) => (Some(o), None),
                Err(e) => (None, Some(e)),
            };
            rows.push(EstimateRow {
                cell: cell.label(),
                ps: cell.ps.name.clone(),
                or: cell.or.name.clone(),
                estimator: kind,
                output,
                error,
            });
        }
    }
    let report = EstimateReport {
        n: data.len(),
        n_treated: data.n_treated(),
        n_untreated: data.n_untreated(),
        rows,
    };
    let header = Header::new(plan);
    let dir = &plan.out;
    let mut files = Vec::new();
    match plan.format {
        Format::Json => files.push(write_json(dir, "estimate_report.json", &header, &report)?),
        Format::Csv => {
            let sizes = format!(
                "# n={} n_treated={} n_untreated={}\n",
                report.n, report.n_treated, report.n_untreated
            );
            files.push(write_csv(dir, "estimate_results.csv", &header, &sizes, |w| {
                write_estimates(w, &report)
            })?);
            files.push(write_csv(dir, "estimate_diagnostics.csv", &header, "", |w| {
                write_diagnostics(w, &report)
            })?);
        }
    }
    Ok(Written {
        files,
        failures: report.rows.iter().filter(|r| r.error.is_some()).count(),
    })
}

/// Columns `cell,ps,or,estimator,status,att,nu0,nu1,error,warnings`.
fn write_estimates<W: Write>(out: W, report: &EstimateReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell", "ps", "or", "estimator", "status", "att", "nu0", "nu1", "error", "warnings"])?;
    for r in &report.rows {
        let mut rec = vec![r.cell.clone(), r.ps.clone(), r.or.clone(), r.estimator.to_string()];
        match &r.output {
            Some(o) => rec.extend([
                "ok".into(),
                fmt_num(o.att),
                fmt_num(o.nu0),
                fmt_num(o.nu1),
                String::new(),
                o.warnings.join("; "),
            ]),
            None => rec.extend([
                "failed".into(),
                String::new(),
                String::new(),
                String::new(),
                r.error.clone().unwrap_or_default(),
                String::new(),
            ]),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `cell,estimator,name,value`, one row per diagnostic.
fn write_diagnostics<W: Write>(out: W, report: &EstimateReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell", "estimator", "name", "value"])?;
    for r in &report.rows {
        if let Some(o) = &r.output {
            for (name, value) in &o.diagnostics {
                w.write_record([r.cell.clone(), r.estimator.to_string(), name.clone(), fmt_num(*value)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn bootstrap(plan: &Plan) -> Result<Written> {
    let schema = plan.schema.as_ref().expect("resolved schema");
    let load = |p: &PathBuf| load_csv(p, schema).with_context(|| format!("loading {}", p.display()));
    let experimental = load(&plan.inputs[0])?;
    let comparison = load(&plan.inputs[1])?;
    let opts = BootstrapOptions {
        workers: plan.workers,
        pca_ratio: plan.pca_ratio,
        benchmark: plan.benchmark,
        keep_draws: plan.long_output,
    };
    let report: BootstrapReport = bootstrap_analysis(
        &experimental,
        &comparison,
        &plan.cells,
        &plan.estimators,
        plan.resamples.expect("resolved resamples"),
        plan.seed,
        &opts,
    )?;
    let header = Header::new(plan);
    let dir = &plan.out;
    let mut files = Vec::new();
    match plan.format {
        Format::Json => files.push(write_json(dir, "bootstrap_report.json", &header, &report)?),
        Format::Csv => {
            let mut extra = format!("# resamples={}\n", report.resamples);
            if let Some((est, se)) = report.benchmark {
                extra.push_str(&format!("# benchmark estimate={} se={}\n", fmt_num(est), fmt_num(se)));
            }
            for (spec, k) in &report.pca_components {
                extra.push_str(&format!("# pca {spec} components={k}\n"));
            }
            files.push(write_csv(dir, "bootstrap_summary.csv", &header, &extra, |w| {
                Ok(report.write_csv(w)?)
            })?);
            if plan.long_output {
                files.push(write_csv(dir, "bootstrap_draws.csv", &header, "", |w| {
                    let mut c = csv::Writer::from_writer(w);
                    c.write_record(["resample", "cell", "estimator", "effect", "bias"])?;
                    for d in &report.draws {
                        c.write_record([
                            d.resample.to_string(),
                            d.cell.clone(),
                            d.estimator.to_string(),
                            d.effect.map(fmt_num).unwrap_or_default(),
                            d.bias.map(fmt_num).unwrap_or_default(),
                        ])?;
                    }
                    c.flush()?;
                    Ok(())
                })?);
            }
        }
    }
    let failures = report.cells.iter().map(|c| c.failures_effect + c.failures_bias).sum();
    Ok(Written { files, failures })
}
