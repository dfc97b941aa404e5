use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// ATT estimators, named as in the result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "OR")]
    Or,
    #[serde(rename = "IPW")]
    Ipw,
    #[serde(rename = "IPW.ratio")]
    IpwRatio,
    #[serde(rename = "AIPW")]
    Aipw,
    #[serde(rename = "AIPW.SP")]
    AipwSp,
    #[serde(rename = "REG")]
    Reg,
    #[serde(rename = "REG2")]
    Reg2,
    #[serde(rename = "LIK")]
    Lik,
    #[serde(rename = "LIK2")]
    Lik2,
    #[serde(rename = "HIR")]
    Hir,
    #[serde(rename = "AIPW.HIR")]
    AipwHir,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 11] = [
        EstimatorKind::Or,
        EstimatorKind::Ipw,
        EstimatorKind::IpwRatio,
        EstimatorKind::Aipw,
        EstimatorKind::AipwSp,
        EstimatorKind::Reg,
        EstimatorKind::Reg2,
        EstimatorKind::Lik,
        EstimatorKind::Lik2,
        EstimatorKind::Hir,
        EstimatorKind::AipwHir,
    ];

    /// The columns of the simulation tables.
    pub const TABLE: [EstimatorKind; 7] = [
        EstimatorKind::Or,
        EstimatorKind::IpwRatio,
        EstimatorKind::Aipw,
        EstimatorKind::Lik,
        EstimatorKind::Lik2,
        EstimatorKind::Hir,
        EstimatorKind::AipwHir,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Or => "OR",
            EstimatorKind::Ipw => "IPW",
            EstimatorKind::IpwRatio => "IPW.ratio",
            EstimatorKind::Aipw => "AIPW",
            EstimatorKind::AipwSp => "AIPW.SP",
            EstimatorKind::Reg => "REG",
            EstimatorKind::Reg2 => "REG2",
            EstimatorKind::Lik => "LIK",
            EstimatorKind::Lik2 => "LIK2",
            EstimatorKind::Hir => "HIR",
            EstimatorKind::AipwHir => "AIPW.HIR",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

/// Point estimates of `nu^0`, `nu^1` and `ATT = nu^1 - nu^0` with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutput {
    pub kind: EstimatorKind,
    pub nu0: f64,
    pub nu1: f64,
    pub att: f64,
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EstimatorOutput {
    pub fn new(kind: EstimatorKind, nu0: f64, nu1: f64) -> Self {
        Self {
            kind,
            nu0,
            nu1,
            att: nu1 - nu0,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn with_diagnostic(mut self, name: &str, value: f64) -> Self {
        self.diagnostics.insert(name.to_string(), value);
        self
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }
}
