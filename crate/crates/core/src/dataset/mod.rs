//! Tabular data with variable roles: ingestion, quartile binning, and the
//! design-matrix builder.
//!
//! A [`Dataset`] is immutable after construction. Every column carries a
//! [`VariableRole`]; exactly one column is the binary outcome, and hold-out
//! columns are barred from every design matrix so they stay usable as
//! untouched grouping variables for predictive checks.

mod design;
mod synthetic;

pub use design::{build_design, CellValues, DesignMatrix, RowValue};
pub use synthetic::{generate_synthetic, DgpConfig, DgpDist, DgpPredictor, SyntheticTruth};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::quantile_sorted;

/// What a column is for. Hold-out columns never enter any design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableRole {
    Outcome,
    Focal,
    Nonfocal,
    Holdout,
    Ignore,
}

/// Column storage: numeric, or categorical with an explicit level order
/// (the first level is the base level for dummy coding).
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_categorical(&self) -> Option<(&[String], &[u32])> {
        match self {
            Column::Categorical { levels, codes } => Some((levels, codes)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub role: VariableRole,
    pub column: Column,
}

/// Cut points and level naming produced by [`Dataset::quartile_bin`].
#[derive(Debug, Clone, Serialize)]
pub struct QuartileBinning {
    pub source: String,
    /// Interior cut points: the 25/50/75% sample quantiles.
    pub cuts: [f64; 3],
    pub levels: [String; 4],
}

/// Per-column schema entry: a bare role, or a role plus a fixed level order.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SchemaEntry {
    Role(String),
    Full {
        role: String,
        #[serde(default)]
        levels: Option<Vec<String>>,
    },
}

/// Column-name → role map, as read from a schema JSON file.
pub type Schema = BTreeMap<String, SchemaEntry>;

#[derive(Debug, Clone)]
pub struct Dataset {
    vars: Vec<Variable>,
    n: usize,
    warnings: Vec<String>,
}

fn parse_role(name: &str, raw: &str, warnings: &mut Vec<String>) -> Result<VariableRole> {
    match raw {
        "outcome" => Ok(VariableRole::Outcome),
        "focal" => Ok(VariableRole::Focal),
        "nonfocal" => Ok(VariableRole::Nonfocal),
        "holdout" => Ok(VariableRole::Holdout),
        "ignore" => Ok(VariableRole::Ignore),
        // Survey weights are accepted but unused: raw sampling weights make
        // the likelihood unstable, so they are parsed and set aside.
        "weight" => {
            let msg = format!("column {name}: survey weights are parsed but unused");
            log::warn!("{msg}");
            warnings.push(msg);
            Ok(VariableRole::Ignore)
        }
        other => Err(Error::Invalid(format!(
            "column {name}: unknown role {other:?} (expected outcome/focal/nonfocal/holdout/ignore/weight)"
        ))),
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA" || t == "NaN" || t == "nan"
}

impl Dataset {
    /// Builds a dataset from columns; all columns must share one length.
    pub fn from_variables(vars: Vec<Variable>) -> Result<Self> {
        let n = vars.first().map(|v| v.column.len()).unwrap_or(0);
        for v in &vars {
            if v.column.len() != n {
                return Err(Error::DimensionMismatch {
                    context: format!("column {}", v.name),
                    expected: n,
                    got: v.column.len(),
                });
            }
        }
        let ds = Dataset { vars, n, warnings: Vec::new() };
        ds.check_outcome()?;
        Ok(ds)
    }

    fn check_outcome(&self) -> Result<()> {
        let outcomes: Vec<&Variable> = self
            .vars
            .iter()
            .filter(|v| v.role == VariableRole::Outcome)
            .collect();
        if outcomes.len() != 1 {
            return Err(Error::Invalid(format!(
                "exactly one column must have role outcome; found {}",
                outcomes.len()
            )));
        }
        let v = outcomes[0];
        match v.column.as_numeric() {
            Some(vals) => {
                for &x in vals {
                    if x != 0.0 && x != 1.0 {
                        return Err(Error::NonBinaryOutcome {
                            column: v.name.clone(),
                            value: format!("{x}"),
                        });
                    }
                }
                Ok(())
            }
            None => Err(Error::NotNumeric { column: v.name.clone() }),
        }
    }

    /// Reads an RFC-4180 CSV (header row required) and attaches roles from the
    /// schema. Any missing cell rejects the whole file; the outcome must be
    /// binary 0/1. Columns absent from the schema are kept with role `ignore`.
    pub fn load_csv(path: &Path, schema: &Schema) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Csv { path: path.display().to_string(), source: e })?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Csv { path: path.display().to_string(), source: e })?
            .iter()
            .map(|s| s.to_string())
            .collect();

        for name in schema.keys() {
            if !headers.iter().any(|h| h == name) {
                return Err(Error::UnknownColumn {
                    column: name.clone(),
                    context: format!("schema vs header of {}", path.display()),
                });
            }
        }

        let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for (ridx, record) in reader.records().enumerate() {
            let record =
                record.map_err(|e| Error::Csv { path: path.display().to_string(), source: e })?;
            if record.len() != headers.len() {
                return Err(Error::Invalid(format!(
                    "row {}: expected {} fields, got {}",
                    ridx + 1,
                    headers.len(),
                    record.len()
                )));
            }
            for (cidx, cell) in record.iter().enumerate() {
                if is_missing(cell) {
                    return Err(Error::MissingValue {
                        row: ridx + 1,
                        column: headers[cidx].clone(),
                    });
                }
                cells[cidx].push(cell.trim().to_string());
            }
        }

        let mut warnings = Vec::new();
        let mut vars = Vec::with_capacity(headers.len());
        for (cidx, name) in headers.iter().enumerate() {
            let (role, fixed_levels) = match schema.get(name) {
                Some(SchemaEntry::Role(r)) => (parse_role(name, r, &mut warnings)?, None),
                Some(SchemaEntry::Full { role, levels }) => {
                    (parse_role(name, role, &mut warnings)?, levels.clone())
                }
                None => (VariableRole::Ignore, None),
            };
            let column = build_column(name, &cells[cidx], fixed_levels)?;
            vars.push(Variable { name: name.clone(), role, column });
        }

        let mut ds = Dataset::from_variables(vars)?;
        ds.warnings = warnings;
        Ok(ds)
    }

    /// Writes the dataset back to CSV. Numeric cells are printed at 17
    /// significant digits so a reload reproduces them bit-exactly.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let header: Vec<&str> = self.vars.iter().map(|v| v.name.as_str()).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n {
            let row: Vec<String> = self
                .vars
                .iter()
                .map(|v| match &v.column {
                    Column::Numeric(vals) => format!("{:.16e}", vals[i]),
                    Column::Categorical { levels, codes } => levels[codes[i] as usize].clone(),
                })
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Option<&Variable> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn outcome(&self) -> &Variable {
        self.vars
            .iter()
            .find(|v| v.role == VariableRole::Outcome)
            .expect("construction guarantees one outcome")
    }

    pub fn outcome_values(&self) -> &[f64] {
        self.outcome().column.as_numeric().expect("outcome is numeric")
    }

    pub fn columns_with_role(&self, role: VariableRole) -> Vec<&Variable> {
        self.vars.iter().filter(|v| v.role == role).collect()
    }

    /// Level names and per-row codes of a column used for grouping or focal
    /// crossing. Binary numeric columns count as two-level categoricals.
    pub fn categorical_view(&self, name: &str) -> Result<(Vec<String>, Vec<u32>)> {
        let var = self.var(name).ok_or_else(|| Error::UnknownColumn {
            column: name.to_string(),
            context: "categorical view".to_string(),
        })?;
        match &var.column {
            Column::Categorical { levels, codes } => Ok((levels.clone(), codes.clone())),
            Column::Numeric(values) => {
                if values.iter().all(|&v| v == 0.0 || v == 1.0) {
                    Ok((
                        vec!["0".to_string(), "1".to_string()],
                        values.iter().map(|&v| v as u32).collect(),
                    ))
                } else {
                    Err(Error::NotCategorical { column: name.to_string() })
                }
            }
        }
    }

    /// Bins a numeric column into a 4-level categorical at the 25/50/75%
    /// sample quantiles (levels "1".."4", bottom quartile first so it becomes
    /// the dummy-coding base level).
    pub fn quartile_bin(
        &self,
        column: &str,
        new_name: &str,
        role: VariableRole,
    ) -> Result<(Dataset, QuartileBinning)> {
        let var = self.var(column).ok_or_else(|| Error::UnknownColumn {
            column: column.to_string(),
            context: "quartile_bin".to_string(),
        })?;
        let values = var
            .column
            .as_numeric()
            .ok_or_else(|| Error::NotNumeric { column: column.to_string() })?;

        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quartile_bin input"));
        sorted.dedup();
        if sorted.len() < 4 {
            return Err(Error::TooFewDistinct { column: column.to_string() });
        }
        let mut all = values.to_vec();
        all.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quartile_bin input"));
        let cuts = [
            quantile_sorted(&all, 0.25),
            quantile_sorted(&all, 0.5),
            quantile_sorted(&all, 0.75),
        ];

        let levels: Vec<String> = (1..=4).map(|i| i.to_string()).collect();
        let codes: Vec<u32> = values
            .iter()
            .map(|&v| {
                if v <= cuts[0] {
                    0
                } else if v <= cuts[1] {
                    1
                } else if v <= cuts[2] {
                    2
                } else {
                    3
                }
            })
            .collect();

        let mut vars = self.vars.clone();
        vars.push(Variable {
            name: new_name.to_string(),
            role,
            column: Column::Categorical { levels: levels.clone(), codes },
        });
        let mut ds = Dataset::from_variables(vars)?;
        ds.warnings = self.warnings.clone();
        let binning = QuartileBinning {
            source: column.to_string(),
            cuts,
            levels: [
                levels[0].clone(),
                levels[1].clone(),
                levels[2].clone(),
                levels[3].clone(),
            ],
        };
        Ok((ds, binning))
    }
}

fn build_column(name: &str, cells: &[String], fixed_levels: Option<Vec<String>>) -> Result<Column> {
    if let Some(levels) = fixed_levels {
        let mut codes = Vec::with_capacity(cells.len());
        for cell in cells {
            match levels.iter().position(|l| l == cell) {
                Some(idx) => codes.push(idx as u32),
                None => {
                    return Err(Error::Invalid(format!(
                        "column {name}: value {cell:?} not in declared levels {levels:?}"
                    )))
                }
            }
        }
        return Ok(Column::Categorical { levels, codes });
    }
    let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
    match parsed {
        Some(values) => Ok(Column::Numeric(values)),
        None => {
            let mut levels: Vec<String> = cells.to_vec();
            levels.sort();
            levels.dedup();
            let codes = cells
                .iter()
                .map(|c| levels.iter().position(|l| l == c).unwrap() as u32)
                .collect();
            Ok(Column::Categorical { levels, codes })
        }
    }
}
