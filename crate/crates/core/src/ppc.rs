//! Posterior predictive checks: replicated outcomes, grouped test statistics,
//! and one- and two-sided posterior predictive p-values.
//!
//! Replications are simulated from a single model's posterior or from the
//! stacked ensemble (each draw slot routed to its allocated model). Checks
//! compare the observed group statistic against the replicated reference
//! distribution; ties count half so that the two one-sided p-values always
//! sum to one and the two-sided value reaches exactly 1.0 at the median.

use ndarray::Array2;
use serde::Serialize;

use crate::dataset::{Dataset, DesignMatrix, VariableRole};
use crate::error::{Error, Result};
use crate::math::{mean, quantile, sigmoid, std_dev};
use crate::model::ModelSpec;
use crate::rng::{stream_rng, Domain};
use crate::sampler::PosteriorDraws;
use crate::stacking::StackedDraws;
use rand::Rng;

/// S×n replicated binary outcomes.
#[derive(Debug, Clone)]
pub struct ReplicatedOutcomes {
    pub matrix: Array2<u8>,
    pub source: String,
    pub seed: u64,
}

/// What to replicate from: one model, or the stacked ensemble.
pub enum PredictiveSource<'a> {
    Single { draws: &'a PosteriorDraws, design: &'a DesignMatrix },
    Stacked { stacked: &'a StackedDraws, members: Vec<(&'a PosteriorDraws, &'a DesignMatrix)> },
}

impl PredictiveSource<'_> {
    fn total_draws(&self) -> usize {
        match self {
            PredictiveSource::Single { draws, .. } => draws.total(),
            PredictiveSource::Stacked { stacked, .. } => stacked.allocation.len(),
        }
    }

    fn rows(&self) -> usize {
        match self {
            PredictiveSource::Single { design, .. } => design.n(),
            PredictiveSource::Stacked { members, .. } => {
                members.first().map(|(_, d)| d.n()).unwrap_or(0)
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            PredictiveSource::Single { draws, design } => {
                if draws.dim() != design.p() {
                    return Err(Error::DimensionMismatch {
                        context: "draws vs design width".into(),
                        expected: design.p(),
                        got: draws.dim(),
                    });
                }
            }
            PredictiveSource::Stacked { stacked, members } => {
                if members.is_empty() {
                    return Err(Error::InvalidArgument("stacked source with no members".into()));
                }
                let n = members[0].1.n();
                for (draws, design) in members {
                    if draws.dim() != design.p() {
                        return Err(Error::DimensionMismatch {
                            context: "draws vs design width".into(),
                            expected: design.p(),
                            got: draws.dim(),
                        });
                    }
                    if design.n() != n {
                        return Err(Error::Invalid(
                            "stacked member designs disagree on row count".into(),
                        ));
                    }
                    if draws.total() < stacked.allocation.len() {
                        return Err(Error::Invalid(
                            "stacked allocation is longer than the member draw stores".into(),
                        ));
                    }
                }
                if stacked.counts.len() != members.len() {
                    return Err(Error::DimensionMismatch {
                        context: "allocation vs member models".into(),
                        expected: members.len(),
                        got: stacked.counts.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Success probabilities for replication slot `s`.
    fn probs_at(&self, s: usize, out: &mut [f64]) {
        let (draws, design) = match self {
            PredictiveSource::Single { draws, design } => (*draws, *design),
            PredictiveSource::Stacked { stacked, members } => {
                let m = stacked.allocation[s];
                (members[m].0, members[m].1)
            }
        };
        let beta = draws.draws.row(s);
        for (i, row) in design.x.rows().into_iter().enumerate() {
            let mut eta = 0.0;
            for j in 0..design.p() {
                eta += row[j] * beta[j];
            }
            out[i] = sigmoid(eta);
        }
    }
}

/// Simulates replicated outcome datasets: slot `s` draws Bernoulli outcomes
/// from its (allocated) model at draw `s`. Each slot has its own RNG stream,
/// so results are reproducible and independent of evaluation order.
pub fn replicate(source: &PredictiveSource, label: &str, seed: u64) -> Result<ReplicatedOutcomes> {
    source.check()?;
    let s_total = source.total_draws();
    let n = source.rows();
    let mut matrix = Array2::zeros((s_total, n));
    let mut probs = vec![0.0; n];
    for s in 0..s_total {
        source.probs_at(s, &mut probs);
        let mut rng = stream_rng(seed, Domain::Replication(s as u64));
        for i in 0..n {
            matrix[(s, i)] = u8::from(rng.gen::<f64>() < probs[i]);
        }
    }
    Ok(ReplicatedOutcomes { matrix, source: label.to_string(), seed })
}

/// Test statistics shipped for grouped checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestStatistic {
    Mean,
    Sd,
    Quantile(f64),
}

impl TestStatistic {
    fn eval(&self, values: &[f64]) -> f64 {
        match self {
            TestStatistic::Mean => mean(values),
            TestStatistic::Sd => std_dev(values),
            TestStatistic::Quantile(q) => quantile(values, *q),
        }
    }
}

/// One grouping cell: observed statistic and its replicated reference
/// distribution.
#[derive(Debug, Clone)]
pub struct GroupPpc {
    pub label: String,
    pub size: usize,
    pub observed: f64,
    pub replicated: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GroupedPpc {
    pub grouping: Vec<String>,
    pub statistic: TestStatistic,
    pub groups: Vec<GroupPpc>,
    pub warnings: Vec<String>,
}

/// Splits observed and replicated outcomes by the crossed levels of the
/// grouping columns and evaluates the test statistic per cell. Empty cells
/// are excluded with a warning naming the level.
pub fn grouped_stat(
    rep: &ReplicatedOutcomes,
    y: &[f64],
    data: &Dataset,
    grouping: &[String],
    statistic: TestStatistic,
) -> Result<GroupedPpc> {
    if grouping.is_empty() {
        return Err(Error::InvalidArgument("grouping list is empty".into()));
    }
    if y.len() != data.n() || rep.matrix.ncols() != data.n() {
        return Err(Error::DimensionMismatch {
            context: "outcomes vs dataset rows".into(),
            expected: data.n(),
            got: y.len().min(rep.matrix.ncols()),
        });
    }
    let mut level_sets = Vec::with_capacity(grouping.len());
    for g in grouping {
        level_sets.push(data.categorical_view(g)?);
    }

    // Crossed levels, row-major in the given column order.
    let mut combos: Vec<Vec<usize>> = vec![vec![]];
    for (levels, _) in &level_sets {
        let mut next = Vec::with_capacity(combos.len() * levels.len());
        for combo in &combos {
            for li in 0..levels.len() {
                let mut c = combo.clone();
                c.push(li);
                next.push(c);
            }
        }
        combos = next;
    }

    let s_total = rep.matrix.nrows();
    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    for combo in combos {
        let label = combo
            .iter()
            .enumerate()
            .map(|(gi, &li)| format!("{}={}", grouping[gi], level_sets[gi].0[li]))
            .collect::<Vec<_>>()
            .join(",");
        let indices: Vec<usize> = (0..data.n())
            .filter(|&i| {
                combo
                    .iter()
                    .enumerate()
                    .all(|(gi, &li)| level_sets[gi].1[i] as usize == li)
            })
            .collect();
        if indices.is_empty() {
            let msg = format!("group {label} is empty and was excluded");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let observed_values: Vec<f64> = indices.iter().map(|&i| y[i]).collect();
        let observed = statistic.eval(&observed_values);
        let mut replicated = Vec::with_capacity(s_total);
        let mut buf = vec![0.0; indices.len()];
        for s in 0..s_total {
            for (bi, &i) in indices.iter().enumerate() {
                buf[bi] = f64::from(rep.matrix[(s, i)]);
            }
            replicated.push(statistic.eval(&buf));
        }
        groups.push(GroupPpc { label, size: indices.len(), observed, replicated });
    }

    Ok(GroupedPpc { grouping: grouping.to_vec(), statistic, groups, warnings })
}

/// One-sided posterior predictive p-value: the share of replicated statistics
/// above the observed one, ties counting half.
pub fn p_one_sided(t_rep: &[f64], t_obs: f64) -> f64 {
    assert!(!t_rep.is_empty(), "need at least one replicated statistic");
    let mut above = 0.0;
    let mut ties = 0.0;
    for &t in t_rep {
        if t > t_obs {
            above += 1.0;
        } else if t == t_obs {
            ties += 1.0;
        }
    }
    (above + 0.5 * ties) / t_rep.len() as f64
}

/// Two-sided posterior predictive p-value: twice the smaller one-sided value,
/// capped at one. Equals exactly 1.0 when the observed statistic sits at the
/// replicated median.
pub fn tspppv(t_rep: &[f64], t_obs: f64) -> f64 {
    let p_plus = p_one_sided(t_rep, t_obs);
    // Under the half-tie rule the mirrored value is exactly the complement.
    let p_minus = 1.0 - p_plus;
    (2.0 * p_plus.min(p_minus)).min(1.0)
}

/// Export histogram: Freedman-Diaconis width with at least 10 bins
/// (presentation only; collapses to one bin for constant data).
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64]) -> Histogram {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Histogram { edges: vec![lo, hi], counts: vec![values.len()] };
    }
    let iqr = quantile(values, 0.75) - quantile(values, 0.25);
    let fd_width = 2.0 * iqr / (values.len() as f64).cbrt();
    let bins = if fd_width > 0.0 {
        (((hi - lo) / fd_width).ceil() as usize).max(10)
    } else {
        10
    };
    let edges: Vec<f64> =
        (0..=bins).map(|b| lo + (hi - lo) * b as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let mut idx = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}

/// Per-group check results, ready for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct PpcEntry {
    pub group: String,
    pub size: usize,
    pub observed: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub tspppv: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, Serialize)]
pub struct PpcReport {
    pub source: String,
    pub grouping: Vec<String>,
    pub draws: usize,
    pub entries: Vec<PpcEntry>,
    pub warnings: Vec<String>,
}

/// Turns grouped statistics into the exported report.
pub fn report_from(grouped: &GroupedPpc, source: &str) -> PpcReport {
    let entries = grouped
        .groups
        .iter()
        .map(|g| {
            let p_plus = p_one_sided(&g.replicated, g.observed);
            PpcEntry {
                group: g.label.clone(),
                size: g.size,
                observed: g.observed,
                p_plus,
                p_minus: 1.0 - p_plus,
                tspppv: tspppv(&g.replicated, g.observed),
                histogram: histogram(&g.replicated),
            }
        })
        .collect();
    PpcReport {
        source: source.to_string(),
        grouping: grouped.grouping.clone(),
        draws: grouped.groups.first().map(|g| g.replicated.len()).unwrap_or(0),
        entries,
        warnings: grouped.warnings.clone(),
    }
}

/// A named predictive source for the hold-out validity check.
pub struct PpcSourceSpec<'a> {
    pub name: String,
    pub source: PredictiveSource<'a>,
}

/// Runs the hold-out validity check: every source (core, candidates, stack)
/// is replicated and checked within levels of the deliberately omitted
/// column. Errors if any model spec references the hold-out column, which
/// would defeat the check.
pub fn holdout_check(
    sources: &[PpcSourceSpec],
    specs: &[&ModelSpec],
    data: &Dataset,
    holdout: &str,
    statistic: TestStatistic,
    seed: u64,
) -> Result<Vec<PpcReport>> {
    let var = data.var(holdout).ok_or_else(|| Error::UnknownColumn {
        column: holdout.to_string(),
        context: "holdout check".to_string(),
    })?;
    if var.role != VariableRole::Holdout {
        return Err(Error::Invalid(format!(
            "column {holdout} must have role holdout to be used for the validity check"
        )));
    }
    for spec in specs {
        let used = spec.terms.iter().any(|t| t == holdout)
            || spec.interactions.iter().any(|(a, b)| a == holdout || b == holdout);
        if used {
            return Err(Error::HoldoutInModel { column: holdout.to_string() });
        }
    }

    let y = data.outcome_values();
    let grouping = vec![holdout.to_string()];
    let mut reports = Vec::with_capacity(sources.len());
    for spec in sources {
        let rep = replicate(&spec.source, &spec.name, seed)?;
        let grouped = grouped_stat(&rep, y, data, &grouping, statistic)?;
        reports.push(report_from(&grouped, &spec.name));
    }
    Ok(reports)
}
