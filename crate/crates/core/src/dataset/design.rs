//! Design-matrix construction: treatment coding with the first level as base,
//! interactions as elementwise products of the parent encodings.

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::Array2;

use crate::dataset::{Column, Dataset, VariableRole};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// A value supplied for one column when encoding a hypothetical row.
#[derive(Debug, Clone)]
pub enum RowValue {
    Num(f64),
    Level(String),
}

/// Column-name → value map for hypothetical rows (focal cells, profiles).
pub type CellValues = BTreeMap<String, RowValue>;

#[derive(Debug, Clone)]
enum Encoder {
    Numeric { name: String },
    Categorical { name: String, levels: Vec<String> },
}

impl Encoder {
    fn width(&self) -> usize {
        match self {
            Encoder::Numeric { .. } => 1,
            Encoder::Categorical { levels, .. } => levels.len() - 1,
        }
    }

    fn part_label(&self, j: usize) -> String {
        match self {
            Encoder::Numeric { name } => name.clone(),
            Encoder::Categorical { name, levels } => format!("{name}={}", levels[j + 1]),
        }
    }

    fn from_dataset(data: &Dataset, name: &str, context: &str) -> Result<Self> {
        let var = data.var(name).ok_or_else(|| Error::UnknownColumn {
            column: name.to_string(),
            context: context.to_string(),
        })?;
        if var.role == VariableRole::Holdout {
            return Err(Error::HoldoutInModel { column: name.to_string() });
        }
        if var.role == VariableRole::Outcome {
            return Err(Error::Invalid(format!(
                "outcome column {name} cannot be used as a predictor"
            )));
        }
        Ok(match &var.column {
            Column::Numeric(_) => Encoder::Numeric { name: name.to_string() },
            Column::Categorical { levels, .. } => {
                Encoder::Categorical { name: name.to_string(), levels: levels.clone() }
            }
        })
    }

    /// Dummy/identity value for observed row `i` of the dataset.
    fn value_at(&self, data: &Dataset, i: usize, j: usize) -> f64 {
        match self {
            Encoder::Numeric { name } => {
                data.var(name).unwrap().column.as_numeric().unwrap()[i]
            }
            Encoder::Categorical { name, .. } => {
                let (_, codes) = data.var(name).unwrap().column.as_categorical().unwrap();
                if codes[i] as usize == j + 1 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Same encoding for a hypothetical row.
    fn value_from(&self, values: &CellValues, j: usize) -> Result<f64> {
        let name = match self {
            Encoder::Numeric { name } | Encoder::Categorical { name, .. } => name,
        };
        let value = values.get(name).ok_or_else(|| {
            Error::Invalid(format!("no value provided for model column {name}"))
        })?;
        match (self, value) {
            (Encoder::Numeric { .. }, RowValue::Num(v)) => Ok(*v),
            (Encoder::Categorical { levels, .. }, RowValue::Level(l)) => {
                let pos = levels.iter().position(|x| x == l).ok_or_else(|| {
                    Error::Invalid(format!("level {l:?} unknown for column {name}"))
                })?;
                Ok(if pos == j + 1 { 1.0 } else { 0.0 })
            }
            (Encoder::Numeric { .. }, RowValue::Level(l)) => Err(Error::Invalid(format!(
                "column {name} is numeric but got level {l:?}"
            ))),
            (Encoder::Categorical { .. }, RowValue::Num(v)) => Err(Error::Invalid(format!(
                "column {name} is categorical but got number {v}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
enum TermEncoder {
    Intercept,
    Main(Encoder),
    Interaction(Encoder, Encoder),
}

impl TermEncoder {
    fn width(&self) -> usize {
        match self {
            TermEncoder::Intercept => 1,
            TermEncoder::Main(e) => e.width(),
            TermEncoder::Interaction(a, b) => a.width() * b.width(),
        }
    }
}

/// An n×p numeric design with its outcome vector and enough encoding state to
/// reproduce columns for new hypothetical rows.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: Array2<f64>,
    pub labels: Vec<String>,
    pub intercept: bool,
    /// Term name (as written in the spec) → contiguous column range.
    pub term_ranges: Vec<(String, Range<usize>)>,
    pub y: Vec<f64>,
    pub warnings: Vec<String>,
    encoders: Vec<TermEncoder>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Encodes one hypothetical row with the training-time column layout.
    pub fn encode_row(&self, values: &CellValues) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.p());
        for enc in &self.encoders {
            match enc {
                TermEncoder::Intercept => row.push(1.0),
                TermEncoder::Main(e) => {
                    for j in 0..e.width() {
                        row.push(e.value_from(values, j)?);
                    }
                }
                TermEncoder::Interaction(a, b) => {
                    for ja in 0..a.width() {
                        let va = a.value_from(values, ja)?;
                        for jb in 0..b.width() {
                            row.push(va * b.value_from(values, jb)?);
                        }
                    }
                }
            }
        }
        Ok(row)
    }
}

/// Builds the design for `spec` on `data`: intercept first, then main effects
/// and interactions in spec order. Rank deficiency is recorded as a warning,
/// not an error; proper priors keep the posterior well defined.
pub fn build_design(spec: &ModelSpec, data: &Dataset) -> Result<DesignMatrix> {
    if spec.outcome != data.outcome().name {
        return Err(Error::Invalid(format!(
            "model {} declares outcome {} but the data outcome is {}",
            spec.name,
            spec.outcome,
            data.outcome().name
        )));
    }

    let mut encoders = Vec::new();
    let mut term_names = Vec::new();
    if spec.intercept {
        encoders.push(TermEncoder::Intercept);
        term_names.push("(Intercept)".to_string());
    }
    for term in &spec.terms {
        let context = format!("model {} term {term}", spec.name);
        encoders.push(TermEncoder::Main(Encoder::from_dataset(data, term, &context)?));
        term_names.push(term.clone());
    }
    for (a, b) in &spec.interactions {
        let context = format!("model {} interaction {a}:{b}", spec.name);
        encoders.push(TermEncoder::Interaction(
            Encoder::from_dataset(data, a, &context)?,
            Encoder::from_dataset(data, b, &context)?,
        ));
        term_names.push(format!("{a}:{b}"));
    }

    let n = data.n();
    let p: usize = encoders.iter().map(|e| e.width()).sum();
    let mut x = Array2::<f64>::zeros((n, p));
    let mut labels = Vec::with_capacity(p);
    let mut term_ranges = Vec::with_capacity(encoders.len());
    let mut col = 0usize;

    for (enc, term_name) in encoders.iter().zip(&term_names) {
        let start = col;
        match enc {
            TermEncoder::Intercept => {
                for i in 0..n {
                    x[(i, col)] = 1.0;
                }
                labels.push("(Intercept)".to_string());
                col += 1;
            }
            TermEncoder::Main(e) => {
                for j in 0..e.width() {
                    for i in 0..n {
                        x[(i, col)] = e.value_at(data, i, j);
                    }
                    labels.push(e.part_label(j));
                    col += 1;
                }
            }
            TermEncoder::Interaction(a, b) => {
                for ja in 0..a.width() {
                    for jb in 0..b.width() {
                        for i in 0..n {
                            x[(i, col)] = a.value_at(data, i, ja) * b.value_at(data, i, jb);
                        }
                        labels.push(format!("{}:{}", a.part_label(ja), b.part_label(jb)));
                        col += 1;
                    }
                }
            }
        }
        term_ranges.push((term_name.clone(), start..col));
    }

    let y = data.outcome_values().to_vec();
    let mut warnings = Vec::new();
    if !gram_is_full_rank(&x) {
        let msg = format!("model {}: design matrix is rank deficient", spec.name);
        log::warn!("{msg}");
        warnings.push(msg);
    }

    Ok(DesignMatrix {
        x,
        labels,
        intercept: spec.intercept,
        term_ranges,
        y,
        warnings,
        encoders,
    })
}

/// Cholesky-based rank probe of XᵀX with a relative pivot tolerance.
fn gram_is_full_rank(x: &Array2<f64>) -> bool {
    let p = x.ncols();
    let mut gram = vec![0.0f64; p * p];
    for a in 0..p {
        for b in a..p {
            let mut s = 0.0;
            for i in 0..x.nrows() {
                s += x[(i, a)] * x[(i, b)];
            }
            gram[a * p + b] = s;
            gram[b * p + a] = s;
        }
    }
    let max_diag = (0..p).map(|j| gram[j * p + j]).fold(0.0f64, f64::max);
    let tol = 1e-10 * max_diag.max(1e-300);

    // In-place Cholesky; a non-positive pivot flags deficiency.
    let mut l = gram;
    for j in 0..p {
        let mut d = l[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if d <= tol {
            return false;
        }
        let dsqrt = d.sqrt();
        l[j * p + j] = dsqrt;
        for i in (j + 1)..p {
            let mut s = l[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / dsqrt;
        }
    }
    true
}
