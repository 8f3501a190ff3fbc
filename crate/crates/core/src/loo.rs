//! Leave-one-out predictive densities per model.
//!
//! The fast path smooths the per-observation importance ratios by replacing
//! their largest values with expected order statistics of a generalized
//! Pareto distribution fitted to the tail (with the usual profile-likelihood
//! grid and weak prior on the shape). The slow path refits the model n times
//! and serves as the ground-truth oracle.

use std::io::Write;

use ndarray::Array2;
use serde::Serialize;

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::{pointwise_log_lik, LogisticPosterior, PriorConfig};
use crate::rng::child_seed;
use crate::sampler::{diagnose, sample, PosteriorDraws, SamplerConfig};

/// Pareto-shape threshold above which an observation's estimate is suspect.
pub const KHAT_WARN: f64 = 0.7;

/// Sentinel shape for columns where no tail could be fitted (e.g. all ratios
/// equal); smoothing is skipped and the plain estimate returned.
pub const KHAT_DEGENERATE: f64 = f64::NEG_INFINITY;

/// S×n pointwise log likelihood: entry (s, i) is log p(y_i | draw s).
#[derive(Debug, Clone)]
pub struct LogLikMatrix {
    pub values: Array2<f64>,
    pub model: String,
}

/// Evaluates the pointwise log likelihood at every retained draw.
pub fn loglik_matrix(
    draws: &PosteriorDraws,
    design: &DesignMatrix,
    model: &str,
) -> Result<LogLikMatrix> {
    if draws.dim() != design.p() {
        return Err(Error::DimensionMismatch {
            context: "draws vs design width".into(),
            expected: design.p(),
            got: draws.dim(),
        });
    }
    let s = draws.total();
    let n = design.n();
    let mut values = Array2::zeros((s, n));
    for si in 0..s {
        let beta = draws.draws.row(si).to_vec();
        let pw = pointwise_log_lik(&beta, &design.x, &design.y)?;
        for (i, v) in pw.into_iter().enumerate() {
            values[(si, i)] = v;
        }
    }
    Ok(LogLikMatrix { values, model: model.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LooMethod {
    Psis,
    Exact,
}

#[derive(Debug, Clone)]
pub struct LooResult {
    /// Log LOO predictive density per observation.
    pub pointwise: Vec<f64>,
    pub total: f64,
    /// Pareto shape per observation; present on the fast path only.
    pub khat: Option<Vec<f64>>,
    pub method: LooMethod,
    /// Observations whose shape exceeded [`KHAT_WARN`].
    pub high_khat: Vec<usize>,
    pub model: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LooSummary {
    pub model: String,
    pub method: LooMethod,
    pub n: usize,
    pub elpd_total: f64,
    pub high_khat: Vec<usize>,
}

impl LooResult {
    pub fn summary(&self) -> LooSummary {
        LooSummary {
            model: self.model.clone(),
            method: self.method,
            n: self.pointwise.len(),
            elpd_total: self.total,
            high_khat: self.high_khat.clone(),
        }
    }

    /// CSV with one row per observation: `observation,elpd,khat`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "observation,elpd,khat")?;
        for (i, &e) in self.pointwise.iter().enumerate() {
            let k = match &self.khat {
                Some(ks) if ks[i] == KHAT_DEGENERATE => "-inf".to_string(),
                Some(ks) => format!("{:.16e}", ks[i]),
                None => String::new(),
            };
            writeln!(out, "{i},{e:.16e},{k}")?;
        }
        Ok(())
    }
}

/// Generalized Pareto quantile (location 0).
fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (1.0 - p).ln()
    } else {
        sigma / k * ((1.0 - p).powf(-k) - 1.0)
    }
}

/// Profile-likelihood GPD fit on sorted exceedances: a fixed grid over the
/// transformed shape, closed-form scale given shape, posterior-mean grid
/// point, and a weak prior pulling the shape toward 1/2.
/// Returns `(khat, sigma)` or `None` when the tail is degenerate.
pub fn fit_gpd(sorted_exceedances: &[f64]) -> Option<(f64, f64)> {
    let x = sorted_exceedances;
    let n = x.len();
    if n < 5 {
        return None;
    }
    let x_max = x[n - 1];
    let quart = x[(n as f64 / 4.0 + 0.5).floor() as usize - 1];
    if !(x_max > 0.0) || !(quart > 0.0) {
        return None;
    }

    let m_grid = 30 + (n as f64).sqrt().floor() as usize;
    let mut grid = Vec::with_capacity(m_grid);
    let mut logliks = Vec::with_capacity(m_grid);
    for j in 1..=m_grid {
        let b = 1.0 / x_max + (1.0 - (m_grid as f64 / (j as f64 - 0.5)).sqrt()) / (3.0 * quart);
        let k: f64 = x.iter().map(|&v| (-b * v).ln_1p()).sum::<f64>() / n as f64;
        let l = if b == 0.0 || k == 0.0 || !(-b / k).is_finite() || -b / k <= 0.0 {
            f64::NEG_INFINITY
        } else {
            n as f64 * ((-b / k).ln() - k - 1.0)
        };
        grid.push(b);
        logliks.push(l);
    }

    let lse = log_sum_exp(&logliks);
    if !lse.is_finite() {
        return None;
    }
    let mut b_post = 0.0;
    for j in 0..m_grid {
        b_post += grid[j] * (logliks[j] - lse).exp();
    }
    if b_post == 0.0 || !b_post.is_finite() {
        return None;
    }
    let k_raw: f64 = x.iter().map(|&v| (-b_post * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k_raw / b_post;
    if !(sigma > 0.0) {
        return None;
    }
    // Weakly informative shrinkage of the shape toward 0.5.
    let khat = (n as f64 * k_raw + 10.0 * 0.5) / (n as f64 + 10.0);
    Some((khat, sigma))
}

/// Pareto-smoothed, self-normalized importance weights for one observation.
///
/// Input is the raw log ratios; output weights are nonnegative, sum to one,
/// and no smoothed weight exceeds the largest raw ratio. The second element
/// is the fitted tail shape ([`KHAT_DEGENERATE`] when smoothing was skipped).
pub fn psis_smooth(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let s = log_ratios.len();
    let max_lr = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ratios: Vec<f64> = log_ratios.iter().map(|&lr| (lr - max_lr).exp()).collect();

    let tail_len = ((0.2 * s as f64).ceil() as usize).min((3.0 * (s as f64).sqrt()).ceil() as usize);
    let khat = if tail_len >= 5 && s > tail_len {
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| ratios[a].partial_cmp(&ratios[b]).unwrap());
        let cutoff = ratios[order[s - tail_len - 1]];
        let tail_idx = &order[s - tail_len..];
        let exceedances: Vec<f64> = tail_idx.iter().map(|&i| ratios[i] - cutoff).collect();
        match fit_gpd(&exceedances) {
            Some((khat, sigma)) => {
                let max_raw = ratios[*order.last().unwrap()];
                for (j, &i) in tail_idx.iter().enumerate() {
                    let q = (j as f64 + 0.5) / tail_len as f64;
                    ratios[i] = (cutoff + gpd_quantile(q, khat, sigma)).min(max_raw);
                }
                khat
            }
            None => KHAT_DEGENERATE,
        }
    } else {
        KHAT_DEGENERATE
    };

    let total: f64 = ratios.iter().sum();
    for r in &mut ratios {
        *r /= total;
    }
    (ratios, khat)
}

/// Fast-path LOO: Pareto-smoothed importance sampling over the draws.
pub fn psis_loo(ll: &LogLikMatrix) -> Result<LooResult> {
    let s = ll.values.nrows();
    let n = ll.values.ncols();
    if s < 100 {
        return Err(Error::InvalidArgument(format!(
            "PSIS needs at least 100 draws (got {s}); use exact LOO for tiny draw counts"
        )));
    }
    let mut pointwise = Vec::with_capacity(n);
    let mut khat = Vec::with_capacity(n);
    let mut high = Vec::new();
    for i in 0..n {
        let col: Vec<f64> = ll.values.column(i).to_vec();
        let log_ratios: Vec<f64> = col.iter().map(|&v| -v).collect();
        let (weights, k) = psis_smooth(&log_ratios);
        let terms: Vec<f64> =
            col.iter().zip(&weights).map(|(&l, &w)| l + w.ln()).collect();
        pointwise.push(log_sum_exp(&terms));
        if k > KHAT_WARN {
            high.push(i);
            log::warn!("model {}: observation {i} has Pareto k̂ = {k:.3} > {KHAT_WARN}", ll.model);
        }
        khat.push(k);
    }
    let total = pointwise.iter().sum();
    Ok(LooResult {
        pointwise,
        total,
        khat: Some(khat),
        method: LooMethod::Psis,
        high_khat: high,
        model: ll.model.clone(),
    })
}

/// Smoothed-importance LOO point predictions: the estimate of each
/// observation's out-of-sample success probability, which the squared-error
/// stacking objective consumes. Success probabilities are recovered from the
/// pointwise log likelihood (`p(y=1) = exp(L)` when y is 1, else `1-exp(L)`).
pub fn loo_point_predictions(
    ll: &LogLikMatrix,
    draws: &PosteriorDraws,
    design: &DesignMatrix,
) -> Result<Vec<f64>> {
    let s = ll.values.nrows();
    let n = ll.values.ncols();
    if draws.total() != s || design.n() != n {
        return Err(Error::DimensionMismatch {
            context: "log-likelihood matrix vs draws/design".into(),
            expected: s,
            got: draws.total(),
        });
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let col: Vec<f64> = ll.values.column(i).to_vec();
        let log_ratios: Vec<f64> = col.iter().map(|&v| -v).collect();
        let (weights, _) = psis_smooth(&log_ratios);
        let yi = design.y[i];
        let mut pred = 0.0;
        for (&l, &w) in col.iter().zip(&weights) {
            let p_obs = l.exp();
            let p_one = if yi == 1.0 { p_obs } else { 1.0 - p_obs };
            pred += w * p_one;
        }
        out.push(pred.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Default cap on the number of exact refits.
pub const EXACT_LOO_DEFAULT_LIMIT: usize = 2000;

/// Oracle-path LOO: refit by MCMC with observation i held out, for every i.
/// Prior scales stay fixed at their full-data values so the refits target the
/// same posterior family the importance sampler approximates.
pub fn exact_loo(
    design: &DesignMatrix,
    prior: &PriorConfig,
    config: &SamplerConfig,
    model: &str,
    limit: Option<usize>,
) -> Result<LooResult> {
    let n = design.n();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "exact LOO needs at least 2 observations (the training fold may not be empty)".into(),
        ));
    }
    let limit = limit.unwrap_or(EXACT_LOO_DEFAULT_LIMIT);
    if n > limit {
        return Err(Error::InvalidArgument(format!(
            "exact LOO would run {n} refits, above the limit {limit}; raise the limit to override"
        )));
    }
    let scales = prior.scales_for(&design.x, design.intercept)?;
    let p = design.p();

    let mut pointwise = Vec::with_capacity(n);
    for i in 0..n {
        let mut x_fold = Array2::zeros((n - 1, p));
        let mut y_fold = Vec::with_capacity(n - 1);
        let mut r = 0;
        for row in 0..n {
            if row == i {
                continue;
            }
            for j in 0..p {
                x_fold[(r, j)] = design.x[(row, j)];
            }
            y_fold.push(design.y[row]);
            r += 1;
        }
        let target =
            LogisticPosterior::with_scales(&x_fold, &y_fold, scales.clone(), design.intercept);
        let fold_config =
            SamplerConfig { seed: child_seed(config.seed, i as u64), ..config.clone() };
        let raw = sample(&target, &fold_config)?;
        let diag = diagnose(&raw)?;
        if diag.max_rhat() > 1.05 {
            return Err(Error::LooRefitDiverged {
                fold: i,
                rhat: diag.max_rhat(),
                limit: 1.05,
            });
        }

        let x_held = design.x.row(i);
        let y_held = design.y[i];
        let s = raw.total();
        let mut log_dens = Vec::with_capacity(s);
        for si in 0..s {
            let beta = target.to_natural(&raw.draws.row(si).to_vec());
            let eta: f64 = x_held.iter().zip(&beta).map(|(&x, &b)| x * b).sum();
            log_dens.push(y_held * eta - crate::math::log1p_exp(eta));
        }
        pointwise.push(log_sum_exp(&log_dens) - (s as f64).ln());
    }

    let total = pointwise.iter().sum();
    Ok(LooResult {
        pointwise,
        total,
        khat: None,
        method: LooMethod::Exact,
        high_khat: Vec::new(),
        model: model.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mean;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_draws(matrix: Vec<Vec<f64>>) -> PosteriorDraws {
        let s = matrix.len();
        let p = matrix[0].len();
        let mut draws = Array2::zeros((s, p));
        for (i, row) in matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                draws[(i, j)] = v;
            }
        }
        PosteriorDraws {
            draws,
            param_names: (0..p).map(|j| format!("b{j}")).collect(),
            chains: 1,
            draws_per_chain: s,
            step_sizes: vec![],
            inv_mass: vec![],
            divergences: vec![0],
            depth_saturations: vec![0],
            seed: 0,
        }
    }

    fn toy_design(n: usize) -> DesignMatrix {
        use crate::dataset::{build_design, Column, Dataset, Variable, VariableRole};
        use crate::model::{ModelSpec, PriorConfig};
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| f64::from(rng.gen_bool(crate::math::sigmoid(v)))).collect();
        let data = Dataset::from_variables(vec![
            Variable { name: "y".into(), role: VariableRole::Outcome, column: Column::Numeric(y) },
            Variable { name: "x".into(), role: VariableRole::Nonfocal, column: Column::Numeric(x) },
        ])
        .unwrap();
        let spec = ModelSpec {
            name: "m".into(),
            outcome: "y".into(),
            terms: vec!["x".into()],
            interactions: vec![],
            intercept: true,
            prior: PriorConfig::default(),
        };
        build_design(&spec, &data).unwrap()
    }

    #[test]
    fn single_zero_draw_gives_log_half() {
        let design = toy_design(6);
        let draws = toy_draws(vec![vec![0.0, 0.0]]);
        let ll = loglik_matrix(&draws, &design, "m").unwrap();
        for v in ll.values.iter() {
            assert_relative_eq!(*v, 0.5f64.ln(), max_relative = 1e-14);
        }
    }

    #[test]
    fn row_sums_equal_total_log_likelihood() {
        let design = toy_design(20);
        let draws = toy_draws(vec![vec![0.2, -0.7], vec![-0.3, 0.4]]);
        let ll = loglik_matrix(&draws, &design, "m").unwrap();
        for s in 0..2 {
            let beta = draws.draws.row(s).to_vec();
            let total = crate::model::log_likelihood(&beta, &design.x, &design.y).unwrap();
            let row_sum: f64 = ll.values.row(s).sum();
            assert_relative_eq!(row_sum, total, max_relative = 1e-12);
        }
    }

    #[test]
    fn matrix_matches_per_draw_recomputation() {
        let design = toy_design(15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> =
            (0..40).map(|_| (0..2).map(|_| rng.gen::<f64>() - 0.5).collect()).collect();
        let draws = toy_draws(rows.clone());
        let ll = loglik_matrix(&draws, &design, "m").unwrap();
        for (s, beta) in rows.iter().enumerate() {
            let pw = pointwise_log_lik(beta, &design.x, &design.y).unwrap();
            for i in 0..design.n() {
                assert_eq!(ll.values[(s, i)], pw[i]);
            }
        }
    }

    #[test]
    fn constant_column_is_degenerate_but_exact() {
        let s = 400;
        let c = -0.62;
        let values = Array2::from_elem((s, 3), c);
        let ll = LogLikMatrix { values, model: "m".into() };
        let out = psis_loo(&ll).unwrap();
        for &e in &out.pointwise {
            assert_relative_eq!(e, c, max_relative = 1e-12);
        }
        let khat = out.khat.unwrap();
        assert!(khat.iter().all(|&k| k == KHAT_DEGENERATE));
        assert!(out.high_khat.is_empty());
    }

    #[test]
    fn too_few_draws_directs_to_exact() {
        let values = Array2::from_elem((50, 2), -0.3);
        let err = psis_loo(&LogLikMatrix { values, model: "m".into() }).unwrap_err();
        assert!(err.to_string().contains("exact"));
    }

    #[test]
    fn smoothed_weights_are_a_distribution_below_raw_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let s = 600;
            let log_ratios: Vec<f64> = (0..s).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
            let (weights, _) = psis_smooth(&log_ratios);
            assert!(weights.iter().all(|&w| w >= 0.0));
            let sum: f64 = weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");

            // Truncation: compare in the same normalization.
            let max_lr = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = log_ratios.iter().map(|&lr| (lr - max_lr).exp()).collect();
            let raw_max_share = 1.0 / raw.iter().sum::<f64>();
            for &w in &weights {
                assert!(w <= raw_max_share * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn heavy_tailed_ratios_are_flagged() {
        // Pareto(shape 1) ratios have tail index 1 > 0.7.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = 2000;
        let log_ratios: Vec<f64> = (0..s)
            .map(|_| {
                let u: f64 = rng.gen::<f64>();
                -(u.ln()) // log of Pareto(1) sample = Exp(1)
            })
            .collect();
        let (_, khat) = psis_smooth(&log_ratios);
        assert!(khat > KHAT_WARN, "khat {khat}");
    }

    #[test]
    fn gpd_fit_recovers_known_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for &(k_true, sigma_true) in &[(0.5f64, 1.0f64), (0.2, 2.0), (0.9, 0.5)] {
            let mut xs: Vec<f64> = (0..4000)
                .map(|_| {
                    let u: f64 = rng.gen::<f64>();
                    sigma_true / k_true * ((1.0 - u).powf(-k_true) - 1.0)
                })
                .collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (k_fit, sigma_fit) = fit_gpd(&xs).unwrap();
            assert!((k_fit - k_true).abs() < 0.1, "k {k_fit} vs {k_true}");
            assert!((sigma_fit - sigma_true).abs() / sigma_true < 0.15, "sigma {sigma_fit} vs {sigma_true}");
        }
    }

    #[test]
    fn exact_loo_rejects_single_observation() {
        let design = toy_design(1);
        let err = exact_loo(
            &design,
            &crate::model::PriorConfig::default(),
            &SamplerConfig::default(),
            "m",
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("training fold"));
    }

    #[test]
    fn exact_loo_is_exchangeable_for_intercept_only() {
        use crate::dataset::{build_design, Column, Dataset, Variable, VariableRole};
        use crate::model::{ModelSpec, PriorConfig};
        let y = vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let data = Dataset::from_variables(vec![Variable {
            name: "y".into(),
            role: VariableRole::Outcome,
            column: Column::Numeric(y.clone()),
        }])
        .unwrap();
        let spec = ModelSpec {
            name: "m0".into(),
            outcome: "y".into(),
            terms: vec![],
            interactions: vec![],
            intercept: true,
            prior: PriorConfig::default(),
        };
        let design = build_design(&spec, &data).unwrap();
        let config = SamplerConfig { chains: 2, warmup: 300, draws: 800, seed: 5, ..Default::default() };
        let out = exact_loo(&design, &PriorConfig::default(), &config, "m0", None).unwrap();
        // Exchangeability: all y=1 folds match each other within MC error,
        // same for y=0 folds.
        let ones: Vec<f64> = (0..5).map(|i| out.pointwise[i]).collect();
        let zeros: Vec<f64> = (5..10).map(|i| out.pointwise[i]).collect();
        for &v in &ones {
            assert!((v - mean(&ones)).abs() < 0.05, "one-fold spread {v} vs {}", mean(&ones));
        }
        for &v in &zeros {
            assert!((v - mean(&zeros)).abs() < 0.05);
        }
        assert_relative_eq!(out.total, out.pointwise.iter().sum::<f64>());
    }

    #[test]
    fn elpd_total_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let s = 300;
        let n = 12;
        let values = Array2::from_shape_fn((s, n), |_| -rng.gen::<f64>() * 2.0 - 0.05);
        let ll = LogLikMatrix { values: values.clone(), model: "m".into() };
        let out = psis_loo(&ll).unwrap();

        let perm: Vec<usize> = (0..n).rev().collect();
        let mut permuted = Array2::zeros((s, n));
        for (new_i, &old_i) in perm.iter().enumerate() {
            for si in 0..s {
                permuted[(si, new_i)] = values[(si, old_i)];
            }
        }
        let out_p = psis_loo(&LogLikMatrix { values: permuted, model: "m".into() }).unwrap();
        assert_relative_eq!(out.total, out_p.total, max_relative = 1e-12);
    }
}
