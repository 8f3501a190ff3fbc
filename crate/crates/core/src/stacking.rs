//! Ensemble weights on the probability simplex, the stacked predictive
//! distribution, and the Brier score.
//!
//! Two objectives are available: maximizing the mean log LOO predictive
//! density (the default), and minimizing the squared error of LOO point
//! predictions. Both return weights that are nonnegative and sum to one.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loo::LooResult;
use crate::math::sigmoid;
use crate::sampler::PosteriorDraws;

/// Floor applied to LOO predictive densities before exponentiation.
pub const DENSITY_FLOOR_LOG: f64 = -690.775527898213705; // ln(1e-300)

/// n×K pointwise LOO predictive densities (not logs).
#[derive(Debug, Clone)]
pub struct LpdMatrix {
    pub values: Array2<f64>,
    pub models: Vec<String>,
}

impl LpdMatrix {
    /// Exponentiates per-model pointwise elpd values, flooring at 1e-300.
    pub fn from_loo(results: &[&LooResult]) -> Result<LpdMatrix> {
        if results.is_empty() {
            return Err(Error::InvalidArgument("need at least one model".into()));
        }
        let n = results[0].pointwise.len();
        for r in results {
            if r.pointwise.len() != n {
                return Err(Error::DimensionMismatch {
                    context: format!("pointwise elpd of model {}", r.model),
                    expected: n,
                    got: r.pointwise.len(),
                });
            }
        }
        let k = results.len();
        let mut values = Array2::zeros((n, k));
        for (kk, r) in results.iter().enumerate() {
            for i in 0..n {
                values[(i, kk)] = r.pointwise[i].max(DENSITY_FLOOR_LOG).exp();
            }
        }
        Ok(LpdMatrix { values, models: results.iter().map(|r| r.model.clone()).collect() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    LogScore,
    SquaredError,
}

#[derive(Debug, Clone, Serialize)]
pub struct StackingWeights {
    pub weights: Vec<f64>,
    pub objective_value: f64,
    pub objective: Objective,
    /// Objective value per optimizer iteration.
    pub trace: Vec<f64>,
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = theta.iter().map(|&t| (t - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean log predictive density of the mixture and its gradient in softmax
/// coordinates (for maximization).
fn logscore_value_grad(p: &Array2<f64>, theta: &[f64]) -> (f64, Vec<f64>) {
    let n = p.nrows();
    let k = p.ncols();
    let w = softmax(theta);
    let mut value = 0.0;
    let mut grad_w = vec![0.0; k];
    for i in 0..n {
        let mut mu = 0.0;
        for kk in 0..k {
            mu += w[kk] * p[(i, kk)];
        }
        value += mu.ln();
        for kk in 0..k {
            grad_w[kk] += p[(i, kk)] / mu;
        }
    }
    value /= n as f64;
    for g in &mut grad_w {
        *g /= n as f64;
    }
    let inner: f64 = w.iter().zip(&grad_w).map(|(&wi, &gi)| wi * gi).sum();
    let grad_theta: Vec<f64> =
        w.iter().zip(&grad_w).map(|(&wi, &gi)| wi * (gi - inner)).collect();
    (value, grad_theta)
}

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;

/// Maximizes the mean log predictive density of the weighted mixture over the
/// simplex, via a softmax reparameterization and BFGS ascent from the uniform
/// start. Flat directions resolve to the symmetric point.
pub fn stack_weights_logscore(p: &LpdMatrix) -> Result<StackingWeights> {
    let n = p.values.nrows();
    let k = p.values.ncols();
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument("empty predictive-density matrix".into()));
    }
    if k == 1 {
        let (value, _) = logscore_value_grad(&p.values, &[0.0]);
        return Ok(StackingWeights {
            weights: vec![1.0],
            objective_value: value,
            objective: Objective::LogScore,
            trace: vec![value],
        });
    }

    let mut theta = vec![0.0; k];
    let (mut value, mut grad) = logscore_value_grad(&p.values, &theta);
    if !value.is_finite() {
        return Err(Error::Invalid("non-finite stacking objective at the uniform start".into()));
    }
    let mut trace = vec![value];
    // Inverse Hessian approximation (of the negated objective).
    let mut h = vec![0.0; k * k];
    for j in 0..k {
        h[j * k + j] = 1.0;
    }

    for _ in 0..MAX_ITER {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < GRAD_TOL {
            break;
        }
        // Ascent direction d = H * grad.
        let mut dir = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                dir[i] += h[i * k + j] * grad[j];
            }
        }
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if slope <= 0.0 {
            // Reset a stale approximation.
            h.fill(0.0);
            for j in 0..k {
                h[j * k + j] = 1.0;
            }
            dir.copy_from_slice(&grad);
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> =
                theta.iter().zip(&dir).map(|(&t, &d)| t + alpha * d).collect();
            let (cand_value, cand_grad) = logscore_value_grad(&p.values, &cand);
            let needed = value + 1e-4 * alpha * dir.iter().zip(&grad).map(|(d, g)| d * g).sum::<f64>();
            if cand_value.is_finite() && cand_value >= needed {
                // BFGS update on the negated objective.
                let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = grad.iter().zip(&cand_grad).map(|(old, new)| old - new).collect();
                let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
                if sy > 1e-12 {
                    let rho = 1.0 / sy;
                    let mut hy = vec![0.0; k];
                    for i in 0..k {
                        for j in 0..k {
                            hy[i] += h[i * k + j] * yv[j];
                        }
                    }
                    let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
                    for i in 0..k {
                        for j in 0..k {
                            h[i * k + j] += rho * rho * (sy + yhy) * s[i] * s[j]
                                - rho * (hy[i] * s[j] + s[i] * hy[j]);
                        }
                    }
                }
                theta = cand;
                value = cand_value;
                grad = cand_grad;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        trace.push(value);
        if !accepted {
            break;
        }
    }

    Ok(StackingWeights {
        weights: softmax(&theta),
        objective_value: value,
        objective: Objective::LogScore,
        trace,
    })
}

/// Solves a dense symmetric linear system by Gaussian elimination with
/// partial pivoting. Returns None when effectively singular.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= f * a[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in (col + 1)..n {
            acc -= a[col * n + j] * x[j];
        }
        x[col] = acc / a[col * n + col];
    }
    Some(x)
}

fn sq_error(f: &Array2<f64>, y: &[f64], w: &[f64]) -> f64 {
    let n = f.nrows();
    let k = f.ncols();
    let mut total = 0.0;
    for i in 0..n {
        let mut pred = 0.0;
        for kk in 0..k {
            pred += w[kk] * f[(i, kk)];
        }
        let r = y[i] - pred;
        total += r * r;
    }
    total
}

/// Minimizes the sum of squared LOO prediction errors over the simplex via
/// active-set enumeration of the equality-constrained quadratic subproblems
/// (exact for the small K this pipeline sees).
pub fn stack_weights_lsq(f: &Array2<f64>, y: &[f64], models: usize) -> Result<StackingWeights> {
    let n = f.nrows();
    let k = f.ncols();
    if k != models {
        return Err(Error::DimensionMismatch {
            context: "prediction matrix vs model count".into(),
            expected: models,
            got: k,
        });
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "outcomes vs prediction rows".into(),
            expected: n,
            got: y.len(),
        });
    }
    for v in f.iter() {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::InvalidArgument(format!(
                "LOO point predictions must lie in [0,1]; got {v}"
            )));
        }
    }
    if k == 1 {
        let obj = sq_error(f, y, &[1.0]);
        return Ok(StackingWeights {
            weights: vec![1.0],
            objective_value: obj,
            objective: Objective::SquaredError,
            trace: vec![obj],
        });
    }
    if k > 16 {
        return Err(Error::InvalidArgument(
            "squared-error stacking supports up to 16 models".into(),
        ));
    }

    // Gram matrix and linear term of the quadratic objective.
    let mut gram = vec![0.0; k * k];
    let mut lin = vec![0.0; k];
    for a in 0..k {
        for b in a..k {
            let mut s = 0.0;
            for i in 0..n {
                s += f[(i, a)] * f[(i, b)];
            }
            gram[a * k + b] = s;
            gram[b * k + a] = s;
        }
        for i in 0..n {
            lin[a] += f[(i, a)] * y[i];
        }
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        let m = support.len();
        // KKT system of the equality-constrained subproblem.
        let dim = m + 1;
        let mut a = vec![0.0; dim * dim];
        let mut b = vec![0.0; dim];
        for (r, &jr) in support.iter().enumerate() {
            for (c, &jc) in support.iter().enumerate() {
                a[r * dim + c] = 2.0 * gram[jr * k + jc];
            }
            a[r * dim + m] = 1.0;
            a[m * dim + r] = 1.0;
            b[r] = 2.0 * lin[jr];
        }
        b[m] = 1.0;
        let Some(sol) = solve_dense(a, b, dim) else { continue };
        if sol[..m].iter().any(|&w| w < -1e-9) {
            continue;
        }
        let mut w = vec![0.0; k];
        let mut total = 0.0;
        for (r, &jr) in support.iter().enumerate() {
            w[jr] = sol[r].max(0.0);
            total += w[jr];
        }
        for wj in &mut w {
            *wj /= total;
        }
        let obj = sq_error(f, y, &w);
        if best.as_ref().map(|(_, b)| obj < b - 1e-15).unwrap_or(true) {
            trace.push(obj);
            best = Some((w, obj));
        }
    }

    let (weights, objective_value) =
        best.ok_or_else(|| Error::Invalid("no feasible stacking support found".into()))?;
    Ok(StackingWeights {
        weights,
        objective_value,
        objective: Objective::SquaredError,
        trace,
    })
}

/// Deterministic largest-remainder allocation of `total` draw slots to models
/// in proportion to their weights.
#[derive(Debug, Clone, Serialize)]
pub struct StackedDraws {
    /// Slot index → model index. The parameter draw for a slot is the owning
    /// model's draw at that same slot index, so slot pairing is preserved
    /// across prediction points.
    pub allocation: Vec<usize>,
    pub counts: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn allocate_draws(weights: &[f64], total: usize) -> Result<StackedDraws> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("no weights to allocate".into()));
    }
    let k = weights.len();
    let mut counts: Vec<usize> = weights.iter().map(|w| (w * total as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = weights
        .iter()
        .enumerate()
        .map(|(j, w)| (j, w * total as f64 - counts[j] as f64))
        .collect();
    // Largest remainder first; ties broken by model order.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for idx in 0..(total - assigned) {
        counts[remainders[idx % k].0] += 1;
    }

    let mut allocation = Vec::with_capacity(total);
    for (j, &c) in counts.iter().enumerate() {
        allocation.extend(std::iter::repeat(j).take(c));
    }
    Ok(StackedDraws { allocation, counts, weights: weights.to_vec() })
}

/// Stacked predictive distribution over new rows: allocates draw slots by
/// largest remainder and mixes per-model inverse-logit predictions. Returns
/// the allocation plus the per-row stacked mean probability.
pub fn stacked_predictive(
    weights: &[f64],
    draws: &[&PosteriorDraws],
    x_new: &[Array2<f64>],
) -> Result<(StackedDraws, Vec<f64>)> {
    if weights.len() != draws.len() || weights.len() != x_new.len() {
        return Err(Error::DimensionMismatch {
            context: "weights vs models".into(),
            expected: weights.len(),
            got: draws.len().min(x_new.len()),
        });
    }
    let s = draws[0].total();
    for d in draws {
        if d.total() != s {
            return Err(Error::Invalid("models disagree on retained draw count".into()));
        }
    }
    let n_new = x_new[0].nrows();
    for (k, x) in x_new.iter().enumerate() {
        if x.nrows() != n_new {
            return Err(Error::Invalid("prediction designs disagree on row count".into()));
        }
        if x.ncols() != draws[k].dim() {
            return Err(Error::DimensionMismatch {
                context: format!("prediction design for model {k}"),
                expected: draws[k].dim(),
                got: x.ncols(),
            });
        }
    }

    let stacked = allocate_draws(weights, s)?;
    let mut mean_prob = vec![0.0; n_new];
    for (slot, &model) in stacked.allocation.iter().enumerate() {
        let beta = draws[model].draws.row(slot);
        for i in 0..n_new {
            let mut eta = 0.0;
            for j in 0..x_new[model].ncols() {
                eta += x_new[model][(i, j)] * beta[j];
            }
            mean_prob[i] += sigmoid(eta);
        }
    }
    for m in &mut mean_prob {
        *m /= s as f64;
    }
    Ok((stacked, mean_prob))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrierOrientation {
    /// Mean squared error; positive, lower is better.
    PositiveMean,
    /// Signed squared-Euclidean form over the two-class indicator vector
    /// (equals -2x the per-observation mean term); higher is better.
    SignedEuclidean,
}

/// Brier score of probabilistic binary forecasts.
pub fn brier(p: &[f64], y: &[f64]) -> Result<f64> {
    brier_oriented(p, y, BrierOrientation::PositiveMean)
}

pub fn brier_oriented(p: &[f64], y: &[f64], orientation: BrierOrientation) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "forecasts vs outcomes".into(),
            expected: y.len(),
            got: p.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::InvalidArgument("empty forecast vector".into()));
    }
    for &pi in p {
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::InvalidArgument(format!("forecast {pi} outside [0,1]")));
        }
    }
    for &yi in y {
        if yi != 0.0 && yi != 1.0 {
            return Err(Error::InvalidArgument(format!("outcome {yi} is not binary")));
        }
    }
    let mean_sq: f64 =
        p.iter().zip(y).map(|(&pi, &yi)| (yi - pi) * (yi - pi)).sum::<f64>() / p.len() as f64;
    Ok(match orientation {
        BrierOrientation::PositiveMean => mean_sq,
        BrierOrientation::SignedEuclidean => -2.0 * mean_sq,
    })
}

/// One row of the weights/Brier report table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsRow {
    pub model: String,
    /// Absent for the core and ensemble rows, mirroring the usual table layout.
    pub weight: Option<f64>,
    pub brier: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsReport {
    pub objective: Objective,
    pub rows: Vec<WeightsRow>,
    /// Stacking objective value attained by the ensemble.
    pub objective_value: f64,
    /// Priors are an analyst assumption; the report records them.
    pub prior_note: String,
}
