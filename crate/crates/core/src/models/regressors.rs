use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numkernel::{ColumnKind, ColumnLabel, DesignMatrix};

pub type RowFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One regressor, written in configs as `x`, `x^2` or `x*z`.
#[derive(Clone)]
pub enum Term {
    Var(String),
    Square(String),
    Product(String, String),
    /// Arbitrary function of the covariate row (columns in dataset order).
    Custom(String, RowFn),
}

impl Term {
    pub fn name(&self) -> String {
        self.to_string()
    }

    fn eval(&self, data: &Dataset) -> Result<Vec<f64>> {
        let col = |name: &str| {
            data.covariate(name)
                .ok_or_else(|| Error::invalid(format!("unknown covariate '{name}'")))
        };
        let out: Vec<f64> = match self {
            Term::Var(a) => col(a)?.to_vec(),
            Term::Square(a) => col(a)?.iter().map(|v| v * v).collect(),
            Term::Product(a, b) => col(a)?.iter().zip(col(b)?).map(|(u, v)| u * v).collect(),
            Term::Custom(_, f) => (0..data.len()).map(|i| f(&data.row(i))).collect(),
        };
        if let Some(row) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("regressor '{self}'"),
                row,
            });
        }
        Ok(out)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(a) => write!(f, "{a}"),
            Term::Square(a) => write!(f, "{a}^2"),
            Term::Product(a, b) => write!(f, "{a}*{b}"),
            Term::Custom(name, _) => write!(f, "{name}"),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Term({self})")
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let ident = |v: &str| {
            let v = v.trim();
            if v.is_empty() || !v.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
                Err(Error::invalid(format!("bad variable name in term '{s}'")))
            } else {
                Ok(v.to_string())
            }
        };
        if let Some(base) = s.strip_suffix("^2") {
            Ok(Term::Square(ident(base)?))
        } else if let Some((a, b)) = s.split_once('*') {
            Ok(Term::Product(ident(a)?, ident(b)?))
        } else {
            Ok(Term::Var(ident(s)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Linear,
    Quadratic,
    Custom,
}

/// Declarative regressor vector; the constant 1 is always the first column.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSpec {
    pub name: String,
    pub kind: RegressorKind,
    terms: Vec<Term>,
}

impl RegressorSpec {
    pub fn new(name: impl Into<String>, kind: RegressorKind, terms: Vec<Term>) -> Self {
        Self {
            name: name.into(),
            kind,
            terms,
        }
    }

    pub fn intercept_only() -> Self {
        Self::new("intercept", RegressorKind::Linear, Vec::new())
    }

    /// `(1, x_1, ..., x_k)`
    pub fn linear(vars: &[&str]) -> Self {
        Self::new(
            "linear",
            RegressorKind::Linear,
            vars.iter().map(|v| Term::Var(v.to_string())).collect(),
        )
    }

    /// `(1, x_1^2, ..., x_k^2)`
    pub fn squares(vars: &[&str]) -> Self {
        Self::new(
            "quadratic",
            RegressorKind::Quadratic,
            vars.iter().map(|v| Term::Square(v.to_string())).collect(),
        )
    }

    /// `(1, x_1, ..., x_k, s_1^2, ..., s_m^2)`
    pub fn linear_plus_squares(vars: &[&str], squared: &[&str]) -> Self {
        let mut terms: Vec<Term> = vars.iter().map(|v| Term::Var(v.to_string())).collect();
        terms.extend(squared.iter().map(|v| Term::Square(v.to_string())));
        Self::new("quadratic", RegressorKind::Quadratic, terms)
    }

    pub fn from_strs<S: AsRef<str>>(name: &str, terms: &[S]) -> Result<Self> {
        Ok(Self::new(
            name,
            RegressorKind::Custom,
            terms
                .iter()
                .map(|t| t.as_ref().parse())
                .collect::<Result<_>>()?,
        ))
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_term(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Column names including the leading constant.
    pub fn column_names(&self) -> Vec<String> {
        std::iter::once("1".to_string())
            .chain(self.terms.iter().map(Term::name))
            .collect()
    }
}

/// Evaluates `spec` on every row: constant first, then the terms in order.
pub fn build_regressors(spec: &RegressorSpec, data: &Dataset) -> Result<DesignMatrix> {
    let mut cols = Vec::with_capacity(spec.terms.len() + 1);
    cols.push((ColumnLabel::new("1", ColumnKind::Constant), vec![1.0; data.len()]));
    for term in &spec.terms {
        let kind = match term {
            Term::Var(_) => ColumnKind::Covariate,
            _ => ColumnKind::Transform,
        };
        cols.push((ColumnLabel::new(term.name(), kind), term.eval(data)?));
    }
    DesignMatrix::from_columns(cols)
}
