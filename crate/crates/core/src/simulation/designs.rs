use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::estimators::CellSpec;
use crate::models::RegressorSpec;
use crate::numkernel::expit;

/// Outcome means of the two-covariate design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrSetting {
    /// `m1 = 2 + 2 x1 + 2 x2`, `m0 = m1 - 2`.
    #[serde(rename = "lin-or", alias = "linear")]
    Linear,
    /// `m1 = 2 + 2 x1^2 + 3 x2^2 - x2`, `m0 = m1 - 2`.
    #[serde(rename = "qua-or", alias = "quadratic")]
    Quadratic,
}

impl OrSetting {
    pub fn label(self) -> &'static str {
        match self {
            OrSetting::Linear => "LIN-OR",
            OrSetting::Quadratic => "QUA-OR",
        }
    }

    pub fn m1(self, x1: f64, x2: f64) -> f64 {
        match self {
            OrSetting::Linear => 2.0 + 2.0 * x1 + 2.0 * x2,
            OrSetting::Quadratic => 2.0 + 2.0 * x1 * x1 + 3.0 * x2 * x2 - x2,
        }
    }

    pub fn m0(self, x1: f64, x2: f64) -> f64 {
        self.m1(x1, x2) - 2.0
    }
}

/// Moderate selection: intercept 1.0, slopes 0.2 on both covariates.
pub const QZ_MODERATE: [f64; 3] = [1.0, 0.2, 0.2];

/// Draws from the two-covariate design.
///
/// `x1 ~ N(0,1)`, `x2 | x1 ~ N(1 + 0.6 x1, 1)`, `T ~ Bernoulli(expit(g0 + g1 x1 + g2 x2))`,
/// `Y | X, T ~ N(m_T(X), x2^2)`.
pub fn gen_qin_zhang_rng<R: Rng + ?Sized>(n: usize, gamma_star: [f64; 3], setting: OrSetting, rng: &mut R) -> Result<Dataset> {
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = 1.0 + 0.6 * a + rng.sample::<f64, _>(StandardNormal);
        let p = expit(gamma_star[0] + gamma_star[1] * a + gamma_star[2] * b);
        let ti = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        let e: f64 = rng.sample(StandardNormal);
        let m = if ti == 1.0 { setting.m1(a, b) } else { setting.m0(a, b) };
        x1.push(a);
        x2.push(b);
        t.push(ti);
        y.push(m + b.abs() * e);
    }
    Dataset::new(y, t, vec![("x1".into(), x1), ("x2".into(), x2)])
}

pub fn gen_qin_zhang(n: usize, gamma_star: [f64; 3], setting: OrSetting, rng_seed: u64) -> Result<Dataset> {
    gen_qin_zhang_rng(n, gamma_star, setting, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}

/// Covariate transforms `x = (exp(z1/2), z2/(1+exp(z1)) + 10, (0.04 z1 z3 + 0.6)^3, (z2 + z4 + 20)^2)`.
pub fn kang_schafer_x(z: [f64; 4]) -> [f64; 4] {
    [
        (0.5 * z[0]).exp(),
        z[1] / (1.0 + z[0].exp()) + 10.0,
        (0.04 * z[0] * z[2] + 0.6).powi(3),
        (z[1] + z[3] + 20.0).powi(2),
    ]
}

/// Draws from the four-covariate design, optionally with the `20 z1 z2` interaction in the outcome.
/// The dataset carries both `z1..z4` and `x1..x4`.
pub fn gen_kang_schafer_rng<R: Rng + ?Sized>(n: usize, interaction: bool, rng: &mut R) -> Result<Dataset> {
    let mut z: [Vec<f64>; 4] = Default::default();
    let mut x: [Vec<f64>; 4] = Default::default();
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let zi: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let e: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let mut yi = 210.0 + 27.4 * zi[0] + 13.7 * (zi[1] + zi[2] + zi[3]) + e;
        if interaction {
            yi += 20.0 * zi[0] * zi[1];
        }
        let p = expit(-zi[0] + 0.5 * zi[1] - 0.25 * zi[2] - 0.1 * zi[3]);
        t.push(if u <= p { 1.0 } else { 0.0 });
        y.push(yi);
        let xi = kang_schafer_x(zi);
        for k in 0..4 {
            z[k].push(zi[k]);
            x[k].push(xi[k]);
        }
    }
    let mut covs = Vec::with_capacity(8);
    for (k, col) in z.into_iter().enumerate() {
        covs.push((format!("z{}", k + 1), col));
    }
    for (k, col) in x.into_iter().enumerate() {
        covs.push((format!("x{}", k + 1), col));
    }
    Dataset::new(y, t, covs)
}

pub fn gen_kang_schafer(n: usize, interaction: bool, rng_seed: u64) -> Result<Dataset> {
    gen_kang_schafer_rng(n, interaction, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}

/// A simulation design with its sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimDesign {
    QinZhang {
        n: usize,
        #[serde(default = "moderate")]
        gamma_star: [f64; 3],
        setting: OrSetting,
    },
    KangSchafer {
        n: usize,
    },
    McCaffrey {
        n: usize,
    },
}

fn moderate() -> [f64; 3] {
    QZ_MODERATE
}

impl SimDesign {
    pub fn n(&self) -> usize {
        match self {
            SimDesign::QinZhang { n, .. } | SimDesign::KangSchafer { n } | SimDesign::McCaffrey { n } => *n,
        }
    }

    pub fn true_att(&self) -> f64 {
        match self {
            SimDesign::QinZhang { .. } => 2.0,
            SimDesign::KangSchafer { .. } | SimDesign::McCaffrey { .. } => 0.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SimDesign::QinZhang { gamma_star, setting, .. } => format!(
                "qin-zhang {} gamma=({}, {}, {})",
                setting.label(),
                gamma_star[0],
                gamma_star[1],
                gamma_star[2]
            ),
            SimDesign::KangSchafer { .. } => "kang-schafer".into(),
            SimDesign::McCaffrey { .. } => "mccaffrey".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() < 10 {
            return Err(Error::invalid(format!("sample size {} is too small (need at least 10)", self.n())));
        }
        if let SimDesign::QinZhang { gamma_star, .. } = self {
            if gamma_star.iter().any(|g| !g.is_finite()) {
                return Err(Error::invalid("gamma_star must be finite"));
            }
        }
        Ok(())
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        match self {
            SimDesign::QinZhang { n, gamma_star, setting } => gen_qin_zhang_rng(*n, *gamma_star, *setting, rng),
            SimDesign::KangSchafer { n } => gen_kang_schafer_rng(*n, false, rng),
            SimDesign::McCaffrey { n } => gen_kang_schafer_rng(*n, true, rng),
        }
    }

    /// Named regressor specs used by the design's result tables.
    pub fn spec(&self, name: &str) -> Option<RegressorSpec> {
        let z = ["z1", "z2", "z3", "z4"];
        let x = ["x1", "x2", "x3", "x4"];
        match (self, name) {
            (SimDesign::QinZhang { .. }, "linear") => Some(RegressorSpec::linear(&["x1", "x2"])),
            (SimDesign::QinZhang { .. }, "quadratic") => Some(RegressorSpec::squares(&["x1", "x2"])),
            (SimDesign::KangSchafer { .. } | SimDesign::McCaffrey { .. }, "z") => {
                Some(RegressorSpec::linear(&z).named("z"))
            }
            (SimDesign::KangSchafer { .. } | SimDesign::McCaffrey { .. }, "x") => {
                Some(RegressorSpec::linear(&x).named("x"))
            }
            (SimDesign::McCaffrey { .. }, "z2") => RegressorSpec::from_strs("z2", &["z1", "z2", "z3", "z4", "z1*z2"]).ok(),
            _ => None,
        }
    }

    /// The PS x OR grid of the design's result table.
    pub fn default_grid(&self) -> Vec<CellSpec> {
        let (ps, or): (&[&str], &[&str]) = match self {
            SimDesign::QinZhang { .. } => (&["linear", "quadratic"], &["linear", "quadratic"]),
            SimDesign::KangSchafer { .. } => (&["z", "x"], &["z", "x"]),
            SimDesign::McCaffrey { .. } => (&["z", "x"], &["z2", "z", "x"]),
        };
        let mut grid = Vec::new();
        for o in or {
            for p in ps {
                grid.push(CellSpec::new(
                    self.spec(p).expect("preset spec"),
                    self.spec(o).expect("preset spec"),
                ));
            }
        }
        if matches!(self, SimDesign::QinZhang { .. }) {
            // Rows ordered PS-major as in the two-covariate table.
            grid.sort_by_key(|c| (c.ps.name != "linear", c.or.name != "linear"));
        }
        grid
    }
}
