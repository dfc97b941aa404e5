use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Maps file columns onto the roles of a [`Dataset`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
    /// Optional column whose text value becomes the row's provenance tag.
    #[serde(default)]
    pub provenance: Option<String>,
}

impl CsvSchema {
    /// Variables of the NSW/CPS/PSID job-training files, outcome `re78`.
    pub fn lalonde() -> Self {
        Self {
            outcome: "re78".into(),
            treatment: "treat".into(),
            covariates: [
                "age", "school", "black", "hisp", "married", "nodegr", "re74", "re75", "u74",
                "u75",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            provenance: None,
        }
    }
}

/// Reads a CSV file with a header row. Row numbers in errors are 1-based data rows.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema, &path.as_ref().display().to_string())
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema, source: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("{source}: missing column '{name}'")))
    };
    let y_idx = find(&schema.outcome)?;
    let t_idx = find(&schema.treatment)?;
    let x_idx: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let prov_idx = schema.provenance.as_deref().map(find).transpose()?;

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut cols = vec![Vec::new(); x_idx.len()];
    let mut prov: Vec<Arc<str>> = Vec::new();
    let default_tag: Arc<str> = Arc::from(source);
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let num = |idx: usize, what: &str| -> Result<f64> {
            let field = rec.get(idx).unwrap_or("");
            if field.is_empty() || field.eq_ignore_ascii_case("na") {
                return Err(Error::Data {
                    row,
                    message: format!("missing value in '{what}'"),
                });
            }
            let v: f64 = field.parse().map_err(|_| Error::Data {
                row,
                message: format!("cannot parse '{field}' in '{what}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    message: format!("non-finite value in '{what}'"),
                });
            }
            Ok(v)
        };
        y.push(num(y_idx, &schema.outcome)?);
        let tv = num(t_idx, &schema.treatment)?;
        if tv != 0.0 && tv != 1.0 {
            return Err(Error::Data {
                row,
                message: format!("treatment '{}' must be 0 or 1, found {tv}", schema.treatment),
            });
        }
        t.push(tv);
        for (c, (&idx, name)) in cols.iter_mut().zip(x_idx.iter().zip(&schema.covariates)) {
            c.push(num(idx, name)?);
        }
        prov.push(match prov_idx {
            Some(p) => Arc::from(rec.get(p).unwrap_or("")),
            None => default_tag.clone(),
        });
    }
    Dataset::with_provenance(
        y,
        t,
        schema.covariates.iter().cloned().zip(cols).collect(),
        prov,
    )
}
