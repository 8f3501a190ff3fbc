//! Predictive comparisons: the focal grid, hypothetical quantile profiles for
//! the non-focal variables, per-cell stacked posteriors, and gap posteriors.
//!
//! Draw pairing is strict: every cell's posterior uses the exact same stacked
//! slot allocation, so differencing two cells cancels model-identity noise
//! within each draw and the gap of a cell with itself is identically zero.

use serde::Serialize;

use crate::dataset::{CellValues, Column, Dataset, DesignMatrix, RowValue};
use crate::error::{Error, Result};
use crate::math::{quantile_sorted, sigmoid};
use crate::sampler::PosteriorDraws;
use crate::stacking::StackedDraws;

/// One crossed level of the focal variables with its observed outcome count.
#[derive(Debug, Clone, Serialize)]
pub struct FocalCell {
    /// (column, level) pairs in focal-column order.
    pub levels: Vec<(String, String)>,
    pub label: String,
    /// Number of outcome-positive rows in the cell.
    pub positives: u64,
    pub size: usize,
}

impl FocalCell {
    /// Observed outcome fraction; undefined for empty cells.
    pub fn fraction(&self) -> Option<f64> {
        if self.size == 0 {
            None
        } else {
            Some(self.positives as f64 / self.size as f64)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FocalGrid {
    pub focal: Vec<String>,
    pub cells: Vec<FocalCell>,
    pub n: usize,
}

/// Builds the focal grid: one cell per crossed level (row-major in the given
/// column order), empty cells retained with size zero.
pub fn focal_grid(data: &Dataset, focal: &[String]) -> Result<FocalGrid> {
    if focal.is_empty() {
        return Err(Error::InvalidArgument("no focal columns given".into()));
    }
    let mut level_sets = Vec::with_capacity(focal.len());
    for f in focal {
        level_sets.push(data.categorical_view(f)?);
    }
    let y = data.outcome_values();

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

    let mut cells = Vec::with_capacity(combos.len());
    for combo in combos {
        let levels: Vec<(String, String)> = combo
            .iter()
            .enumerate()
            .map(|(fi, &li)| (focal[fi].clone(), level_sets[fi].0[li].clone()))
            .collect();
        let label = levels
            .iter()
            .map(|(c, l)| format!("{c}={l}"))
            .collect::<Vec<_>>()
            .join(",");
        let mut positives = 0u64;
        let mut size = 0usize;
        for i in 0..data.n() {
            if combo
                .iter()
                .enumerate()
                .all(|(fi, &li)| level_sets[fi].1[i] as usize == li)
            {
                size += 1;
                if y[i] == 1.0 {
                    positives += 1;
                }
            }
        }
        cells.push(FocalCell { levels, label, positives, size });
    }
    Ok(FocalGrid { focal: focal.to_vec(), cells, n: data.n() })
}

/// One hypothetical observation: every non-focal variable set to its marginal
/// quantile (numeric) or the level bracketing that quantile (categorical,
/// with the mode at the median).
#[derive(Debug, Clone)]
pub struct HypotheticalProfile {
    pub tag: f64,
    pub values: CellValues,
}

pub fn build_profiles(
    data: &Dataset,
    nonfocal: &[String],
    quantiles: &[f64],
) -> Result<Vec<HypotheticalProfile>> {
    let mut profiles = Vec::with_capacity(quantiles.len());
    for &q in quantiles {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("profile quantile {q} outside [0,1]")));
        }
        let mut values = CellValues::new();
        for name in nonfocal {
            let var = data.var(name).ok_or_else(|| Error::UnknownColumn {
                column: name.clone(),
                context: "profiles".to_string(),
            })?;
            match &var.column {
                Column::Numeric(col) => {
                    let mut sorted = col.clone();
                    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in profile column"));
                    values.insert(name.clone(), RowValue::Num(quantile_sorted(&sorted, q)));
                }
                Column::Categorical { levels, codes } => {
                    let mut counts = vec![0usize; levels.len()];
                    for &c in codes {
                        counts[c as usize] += 1;
                    }
                    let pick = if q == 0.5 {
                        // Mode, first level winning ties.
                        counts
                            .iter()
                            .enumerate()
                            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                            .map(|(i, _)| i)
                            .unwrap_or(0)
                    } else {
                        let total: usize = counts.iter().sum();
                        let mut acc = 0.0;
                        let mut pick = levels.len() - 1;
                        for (i, &c) in counts.iter().enumerate() {
                            acc += c as f64 / total as f64;
                            if acc >= q {
                                pick = i;
                                break;
                            }
                        }
                        pick
                    };
                    values.insert(name.clone(), RowValue::Level(levels[pick].clone()));
                }
            }
        }
        profiles.push(HypotheticalProfile { tag: q, values });
    }
    Ok(profiles)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Sort-based summary: median and the 5%/95% quantiles.
pub fn summarize(draws: &[f64]) -> Summary {
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN draw"));
    Summary {
        median: quantile_sorted(&sorted, 0.5),
        q05: quantile_sorted(&sorted, 0.05),
        q95: quantile_sorted(&sorted, 0.95),
    }
}

/// Stacked posterior of the outcome probability for one focal cell × profile.
#[derive(Debug, Clone)]
pub struct CellPosterior {
    pub cell_label: String,
    pub focal_levels: Vec<(String, String)>,
    pub profile_tag: f64,
    pub draws: Vec<f64>,
    pub summary: Summary,
}

/// Per stacked draw slot, the inverse-logit prediction of the allocated model
/// for every grid cell × profile. Cells are ordered grid-row-major with
/// profiles innermost.
pub fn predict_cells(
    stacked: &StackedDraws,
    members: &[(&PosteriorDraws, &DesignMatrix)],
    data: &Dataset,
    grid: &FocalGrid,
    profiles: &[HypotheticalProfile],
) -> Result<Vec<CellPosterior>> {
    if members.len() != stacked.counts.len() {
        return Err(Error::DimensionMismatch {
            context: "stacked allocation vs member models".into(),
            expected: members.len(),
            got: stacked.counts.len(),
        });
    }
    let s_total = stacked.allocation.len();
    for (draws, design) in members {
        if draws.dim() != design.p() {
            return Err(Error::DimensionMismatch {
                context: "draws vs design width".into(),
                expected: design.p(),
                got: draws.dim(),
            });
        }
        if draws.total() < s_total {
            return Err(Error::Invalid("member draw store shorter than allocation".into()));
        }
    }

    let mut out = Vec::with_capacity(grid.cells.len() * profiles.len());
    for cell in &grid.cells {
        for profile in profiles {
            let mut values = profile.values.clone();
            for (col, level) in &cell.levels {
                let var = data.var(col).ok_or_else(|| Error::UnknownColumn {
                    column: col.clone(),
                    context: "focal cell".to_string(),
                })?;
                let v = match &var.column {
                    Column::Numeric(_) => RowValue::Num(level.parse::<f64>().map_err(|_| {
                        Error::Invalid(format!("focal level {level} of {col} is not numeric"))
                    })?),
                    Column::Categorical { .. } => RowValue::Level(level.clone()),
                };
                values.insert(col.clone(), v);
            }
            let rows: Vec<Vec<f64>> = members
                .iter()
                .map(|(_, design)| design.encode_row(&values))
                .collect::<Result<_>>()?;

            let mut draws = Vec::with_capacity(s_total);
            for (slot, &model) in stacked.allocation.iter().enumerate() {
                let beta = members[model].0.draws.row(slot);
                let eta: f64 = rows[model].iter().zip(beta).map(|(&x, &b)| x * b).sum();
                draws.push(sigmoid(eta));
            }
            let summary = summarize(&draws);
            out.push(CellPosterior {
                cell_label: cell.label.clone(),
                focal_levels: cell.levels.clone(),
                profile_tag: profile.tag,
                draws,
                summary,
            });
        }
    }
    Ok(out)
}

/// Posterior of the difference between two focal levels, per draw slot.
#[derive(Debug, Clone)]
pub struct GapPosterior {
    /// e.g. "FEM=0 - FEM=1".
    pub contrast: String,
    /// Levels of the remaining focal variables this gap conditions on.
    pub fixed_levels: Vec<(String, String)>,
    pub profile_tag: f64,
    pub draws: Vec<f64>,
    pub summary: Summary,
}

/// Differences cell posteriors along one focal variable, holding the other
/// focal levels fixed, aligned draw-by-draw (same stacked slots, no
/// re-pairing).
pub fn gap_posterior(
    cells: &[CellPosterior],
    focal_var: &str,
    reference_level: &str,
    comparison_level: &str,
    profile_tag: f64,
) -> Result<Vec<GapPosterior>> {
    let strip = |cell: &CellPosterior| -> Option<Vec<(String, String)>> {
        let mut fixed = Vec::new();
        let mut found = false;
        for (col, level) in &cell.focal_levels {
            if col == focal_var {
                found = true;
            } else {
                fixed.push((col.clone(), level.clone()));
            }
        }
        found.then_some(fixed)
    };

    let level_of = |cell: &CellPosterior| -> Option<String> {
        cell.focal_levels
            .iter()
            .find(|(col, _)| col == focal_var)
            .map(|(_, l)| l.clone())
    };

    let mut out = Vec::new();
    for reference in cells.iter().filter(|c| c.profile_tag == profile_tag) {
        if level_of(reference).as_deref() != Some(reference_level) {
            continue;
        }
        let fixed = strip(reference).ok_or_else(|| {
            Error::Invalid(format!("cells do not carry focal variable {focal_var}"))
        })?;
        let comparison = cells
            .iter()
            .filter(|c| c.profile_tag == profile_tag)
            .find(|c| level_of(c).as_deref() == Some(comparison_level) && strip(c).as_ref() == Some(&fixed))
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "no {focal_var}={comparison_level} cell matches {}",
                    reference.cell_label
                ))
            })?;
        if comparison.draws.len() != reference.draws.len() {
            return Err(Error::DimensionMismatch {
                context: "gap draw counts".into(),
                expected: reference.draws.len(),
                got: comparison.draws.len(),
            });
        }
        let draws: Vec<f64> = reference
            .draws
            .iter()
            .zip(&comparison.draws)
            .map(|(&a, &b)| a - b)
            .collect();
        let summary = summarize(&draws);
        out.push(GapPosterior {
            contrast: format!("{focal_var}={reference_level} - {focal_var}={comparison_level}"),
            fixed_levels: fixed,
            profile_tag,
            draws,
            summary,
        });
    }
    if out.is_empty() {
        return Err(Error::Invalid(format!(
            "no cells with {focal_var}={reference_level} at profile {profile_tag}"
        )));
    }
    Ok(out)
}
