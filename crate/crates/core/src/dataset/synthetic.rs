//! Synthetic Bernoulli-outcome data with a known coefficient vector, used as
//! the test substrate throughout the crate.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, Variable, VariableRole};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::rng::{stream_rng, Domain};

/// Marginal (or source-linked) distribution of one synthetic predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpDist {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    Categorical { levels: Vec<String>, probs: Vec<f64> },
    /// `weight * value(source) + Normal(0, noise_sd)`: a noisy numeric proxy.
    Linked { source: String, weight: f64, noise_sd: f64 },
    /// Binary copy of a binary source, flipped with probability `flip_prob`.
    FlipOf { source: String, flip_prob: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpPredictor {
    pub name: String,
    pub dist: DgpDist,
    /// One coefficient for numeric/binary predictors; L-1 coefficients for a
    /// categorical one (base level contributes zero).
    pub coef: Vec<f64>,
    pub role: VariableRole,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub intercept: f64,
    #[serde(default = "default_outcome_name")]
    pub outcome: String,
    pub predictors: Vec<DgpPredictor>,
}

fn default_outcome_name() -> String {
    "y".to_string()
}

/// The dataset's generating truth, written alongside synthetic data so test
/// harnesses can score recovery.
#[derive(Debug, Clone, Serialize)]
pub struct SyntheticTruth {
    pub seed: u64,
    pub config: DgpConfig,
}

enum Generated {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl Generated {
    fn numeric_view(&self) -> Option<&[f64]> {
        match self {
            Generated::Numeric(v) => Some(v),
            _ => None,
        }
    }
}

/// Draws a reproducible dataset with `y ~ Bernoulli(inverse-logit(eta))`.
pub fn generate_synthetic(config: &DgpConfig, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    if config.n == 0 {
        return Err(Error::InvalidArgument("synthetic n must be positive".into()));
    }
    let n = config.n;
    let mut rng = stream_rng(seed, Domain::Synthetic);
    let mut eta = vec![config.intercept; n];
    let mut generated: Vec<(String, Generated)> = Vec::with_capacity(config.predictors.len());

    for pred in &config.predictors {
        let expected_coefs = match &pred.dist {
            DgpDist::Categorical { levels, .. } => levels.len().saturating_sub(1),
            _ => 1,
        };
        if pred.coef.len() != expected_coefs {
            return Err(Error::DimensionMismatch {
                context: format!("coefficients for predictor {}", pred.name),
                expected: expected_coefs,
                got: pred.coef.len(),
            });
        }

        let values = match &pred.dist {
            DgpDist::Normal { mean, sd } => {
                if *sd < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "predictor {}: negative sd",
                        pred.name
                    )));
                }
                let dist = Normal::new(*mean, *sd)
                    .map_err(|e| Error::InvalidArgument(format!("{}: {e}", pred.name)))?;
                Generated::Numeric((0..n).map(|_| dist.sample(&mut rng)).collect())
            }
            DgpDist::Bernoulli { p } => {
                Generated::Numeric((0..n).map(|_| f64::from(rng.gen_bool(*p))).collect())
            }
            DgpDist::Categorical { levels, probs } => {
                if levels.len() != probs.len() || levels.len() < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "predictor {}: levels and probs must align (>= 2 levels)",
                        pred.name
                    )));
                }
                let total: f64 = probs.iter().sum();
                let codes = (0..n)
                    .map(|_| {
                        let u: f64 = rng.gen::<f64>() * total;
                        let mut acc = 0.0;
                        let mut code = levels.len() as u32 - 1;
                        for (j, p) in probs.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                code = j as u32;
                                break;
                            }
                        }
                        code
                    })
                    .collect();
                Generated::Categorical { levels: levels.clone(), codes }
            }
            DgpDist::Linked { source, weight, noise_sd } => {
                let src = lookup_numeric(&generated, source, &pred.name)?.to_vec();
                let dist = Normal::new(0.0, *noise_sd)
                    .map_err(|e| Error::InvalidArgument(format!("{}: {e}", pred.name)))?;
                Generated::Numeric(
                    src.iter().map(|&v| weight * v + dist.sample(&mut rng)).collect(),
                )
            }
            DgpDist::FlipOf { source, flip_prob } => {
                let src = lookup_numeric(&generated, source, &pred.name)?.to_vec();
                Generated::Numeric(
                    src.iter()
                        .map(|&v| {
                            let flipped = rng.gen_bool(*flip_prob);
                            if flipped {
                                1.0 - v
                            } else {
                                v
                            }
                        })
                        .collect(),
                )
            }
        };

        match &values {
            Generated::Numeric(v) => {
                for i in 0..n {
                    eta[i] += pred.coef[0] * v[i];
                }
            }
            Generated::Categorical { codes, .. } => {
                for i in 0..n {
                    let c = codes[i] as usize;
                    if c > 0 {
                        eta[i] += pred.coef[c - 1];
                    }
                }
            }
        }
        generated.push((pred.name.clone(), values));
    }

    let y: Vec<f64> = eta.iter().map(|&e| f64::from(rng.gen_bool(sigmoid(e)))).collect();

    let mut vars = Vec::with_capacity(config.predictors.len() + 1);
    vars.push(Variable {
        name: config.outcome.clone(),
        role: VariableRole::Outcome,
        column: Column::Numeric(y),
    });
    for (pred, (name, values)) in config.predictors.iter().zip(generated) {
        let column = match values {
            Generated::Numeric(v) => Column::Numeric(v),
            Generated::Categorical { levels, codes } => Column::Categorical { levels, codes },
        };
        vars.push(Variable { name, role: pred.role, column });
    }

    let data = Dataset::from_variables(vars)?;
    let truth = SyntheticTruth { seed, config: config.clone() };
    Ok((data, truth))
}

fn lookup_numeric<'a>(
    generated: &'a [(String, Generated)],
    source: &str,
    consumer: &str,
) -> Result<&'a [f64]> {
    generated
        .iter()
        .find(|(name, _)| name == source)
        .and_then(|(_, g)| g.numeric_view())
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "predictor {consumer}: source {source} must be an earlier numeric predictor"
            ))
        })
}
