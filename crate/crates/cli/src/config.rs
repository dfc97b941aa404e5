//! Run configuration: the JSON file, presets, flag overrides and the resolved plan.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use calatt::dataio::CsvSchema;
use calatt::estimators::CellSpec;
use calatt::models::{Link, RegressorSpec};
use calatt::simulation::{OrSetting, SimDesign, QZ_MODERATE};
use calatt::EstimatorKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Estimate,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One `(ps, or)` pair of model names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub ps: String,
    pub or: String,
}

/// The config file. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when present.
    pub command: Option<Command>,
    /// `qz-moderate`, `qz-moderate-quadratic` or `kang-schafer`; fills keys left unset.
    pub preset: Option<String>,
    pub design: Option<SimDesign>,
    /// Named regressor vectors, each a list of terms (`x`, `x^2`, `x*z`); the constant is implicit.
    #[serde(default)]
    pub models: BTreeMap<String, Vec<String>>,
    pub grid: Option<Vec<GridCell>>,
    pub link: Option<Link>,
    pub estimators: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub resamples: Option<usize>,
    /// Input file of `estimate`.
    pub data: Option<PathBuf>,
    /// Experimental and comparison files of `bootstrap`.
    pub experimental: Option<PathBuf>,
    pub comparison: Option<PathBuf>,
    /// Column roles of the input files; `bootstrap` defaults to the job-training layout.
    pub schema: Option<CsvSchema>,
    pub pca_ratio: Option<f64>,
    /// Experimental benchmark `[estimate, standard error]` printed with the bootstrap table.
    pub benchmark: Option<(f64, f64)>,
    /// Also write per-replicate (or per-resample) estimates.
    pub long_output: Option<bool>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    fn preset(name: &str) -> Result<Self> {
        let qz = |setting| Self {
            design: Some(SimDesign::QinZhang { n: 1000, gamma_star: QZ_MODERATE, setting }),
            seed: Some(2017),
            replicates: Some(1000),
            ..Self::default()
        };
        Ok(match name {
            "qz-moderate" => qz(OrSetting::Linear),
            "qz-moderate-quadratic" => qz(OrSetting::Quadratic),
            "kang-schafer" => Self {
                design: Some(SimDesign::KangSchafer { n: 1000 }),
                seed: Some(2017),
                replicates: Some(5000),
                ..Self::default()
            },
            other => bail!("unknown preset '{other}' (known: qz-moderate, qz-moderate-quadratic, kang-schafer)"),
        })
    }

    /// Keys set in `self` win; unset keys are taken from the named preset.
    fn with_preset(self, name: &str) -> Result<Self> {
        let p = Self::preset(name)?;
        Ok(Self {
            design: self.design.or(p.design),
            seed: self.seed.or(p.seed),
            replicates: self.replicates.or(p.replicates),
            ..self
        })
    }
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub long_output: bool,
}

/// What a command needs to run: inputs of the estimators, then output settings.
#[derive(Debug, Clone, Serialize)]
pub struct Plan {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<SimDesign>,
    /// Each cell as `(label, ps columns, or columns)`.
    pub grid: Vec<(String, Vec<String>, Vec<String>)>,
    pub link: Link,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resamples: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<CsvSchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<(f64, f64)>,
    #[serde(skip)]
    pub cells: Vec<CellSpec>,
    #[serde(skip)]
    pub long_output: bool,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub format: Format,
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Plan {
    /// SHA-256 of the result-determining settings; output location, format and worker
    /// count are excluded because they do not change the numbers.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Validates the config against the subcommand and applies presets and overrides.
pub fn resolve(command: Command, cfg: RunConfig, ov: Overrides) -> Result<Plan> {
    if let Some(c) = cfg.command {
        if c != command {
            bail!("config is for '{}' but the '{}' subcommand was run", name(c), name(command));
        }
    }
    let cfg = match ov.preset.as_deref().or(cfg.preset.as_deref()) {
        Some(p) => {
            let p = p.to_string();
            cfg.with_preset(&p)?
        }
        None => cfg,
    };

    let estimators = match &cfg.estimators {
        Some(list) => list
            .iter()
            .map(|s| s.parse::<EstimatorKind>().map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()?,
        None => EstimatorKind::TABLE.to_vec(),
    };
    if estimators.is_empty() {
        bail!("no estimators listed");
    }
    for (i, k) in estimators.iter().enumerate() {
        if estimators[..i].contains(k) {
            bail!("estimator {k} listed twice");
        }
    }
    let link = cfg.link.unwrap_or(Link::Logistic);
    let seed = ov.seed.or(cfg.seed).unwrap_or(2017);

    let mut plan = Plan {
        command,
        design: None,
        grid: Vec::new(),
        link,
        estimators,
        seed,
        replicates: None,
        resamples: None,
        inputs: Vec::new(),
        schema: None,
        pca_ratio: None,
        benchmark: None,
        cells: Vec::new(),
        long_output: ov.long_output || cfg.long_output.unwrap_or(false),
        out: ov.out.or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
        format: ov.format.or(cfg.format).unwrap_or_default(),
        workers: ov.workers.or(cfg.workers),
    };
    if plan.workers == Some(0) {
        bail!("workers must be at least 1");
    }

    let unused = |key: &str, set: bool| -> Result<()> {
        if set {
            bail!("'{key}' does not apply to '{}'", name(command));
        }
        Ok(())
    };
    match command {
        Command::Simulate => {
            unused("data", cfg.data.is_some())?;
            unused("experimental", cfg.experimental.is_some())?;
            unused("comparison", cfg.comparison.is_some())?;
            unused("schema", cfg.schema.is_some())?;
            unused("resamples", cfg.resamples.is_some())?;
            unused("pca_ratio", cfg.pca_ratio.is_some())?;
            unused("benchmark", cfg.benchmark.is_some())?;
            let design = cfg.design.clone().context("simulate needs a 'design' or a preset")?;
            design.validate()?;
            let replicates = cfg.replicates.context("simulate needs 'replicates'")?;
            if replicates == 0 {
                bail!("replicates must be positive");
            }
            plan.cells = match &cfg.grid {
                Some(g) => cells(g, &cfg.models, link, |n| design.spec(n))?,
                None if cfg.models.is_empty() => design
                    .default_grid()
                    .into_iter()
                    .map(|mut c| {
                        c.link = link;
                        c
                    })
                    .collect(),
                None => bail!("'models' given without a 'grid'"),
            };
            plan.design = Some(design);
            plan.replicates = Some(replicates);
        }
        Command::Estimate | Command::Bootstrap => {
            unused("design", cfg.design.is_some())?;
            unused("replicates", cfg.replicates.is_some())?;
            let schema = match (command, cfg.schema.clone()) {
                (_, Some(s)) => s,
                (Command::Bootstrap, None) => CsvSchema::lalonde(),
                _ => bail!("estimate needs a 'schema' naming the outcome, treatment and covariate columns"),
            };
            let covs: Vec<&str> = schema.covariates.iter().map(String::as_str).collect();
            let builtin = |n: &str| match n {
                "linear" => Some(RegressorSpec::linear(&covs)),
                "intercept" => Some(RegressorSpec::intercept_only()),
                _ => None,
            };
            let grid = cfg.grid.clone().unwrap_or_else(|| {
                vec![GridCell { ps: "linear".into(), or: "linear".into() }]
            });
            plan.cells = cells(&grid, &cfg.models, link, builtin)?;
            if command == Command::Estimate {
                unused("experimental", cfg.experimental.is_some())?;
                unused("comparison", cfg.comparison.is_some())?;
                unused("resamples", cfg.resamples.is_some())?;
                unused("pca_ratio", cfg.pca_ratio.is_some())?;
                unused("benchmark", cfg.benchmark.is_some())?;
                plan.inputs = vec![cfg.data.clone().context("estimate needs a 'data' file")?];
            } else {
                unused("data", cfg.data.is_some())?;
                let resamples = cfg.resamples.unwrap_or(500);
                if resamples == 0 {
                    bail!("resamples must be positive");
                }
                if let Some(r) = cfg.pca_ratio {
                    if !(r > 0.0 && r < 1.0) {
                        bail!("pca_ratio must lie in (0, 1), got {r}");
                    }
                }
                plan.inputs = vec![
                    cfg.experimental.clone().context("bootstrap needs an 'experimental' file")?,
                    cfg.comparison.clone().context("bootstrap needs a 'comparison' file")?,
                ];
                plan.resamples = Some(resamples);
                plan.pca_ratio = cfg.pca_ratio;
                plan.benchmark = cfg.benchmark;
            }
            plan.schema = Some(schema);
        }
    }
    plan.grid = plan
        .cells
        .iter()
        .map(|c| (c.label(), c.ps.column_names(), c.or.column_names()))
        .collect();
    for (i, g) in plan.grid.iter().enumerate() {
        if plan.grid[..i].iter().any(|h| h.0 == g.0) {
            bail!("grid cell '{}' listed twice", g.0);
        }
    }
    Ok(plan)
}

fn name(c: Command) -> &'static str {
    match c {
        Command::Simulate => "simulate",
        Command::Estimate => "estimate",
        Command::Bootstrap => "bootstrap",
    }
}

/// Looks up model names in the config first, then among the built-in names.
fn cells(
    grid: &[GridCell],
    models: &BTreeMap<String, Vec<String>>,
    link: Link,
    builtin: impl Fn(&str) -> Option<RegressorSpec>,
) -> Result<Vec<CellSpec>> {
    if grid.is_empty() {
        bail!("empty model grid");
    }
    let spec = |n: &str| -> Result<RegressorSpec> {
        match models.get(n) {
            Some(terms) => Ok(RegressorSpec::from_strs(n, terms)?),
            None => builtin(n).with_context(|| format!("unknown model '{n}'")),
        }
    };
    grid.iter()
        .map(|g| {
            let mut c = CellSpec::new(spec(&g.ps)?, spec(&g.or)?);
            c.link = link;
            Ok(c)
        })
        .collect()
}
