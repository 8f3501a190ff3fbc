//! Bayesian logistic regression: likelihood, independent normal priors with
//! autoscaling, log posterior with analytic gradient, and predictions.
//!
//! All logistic quantities go through the stable `log1p_exp`/`sigmoid` forms;
//! probabilities are floored only when taking logs of predictive densities
//! (see [`crate::loo`]).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::math::{log1p_exp, sigmoid, std_dev};

/// Independent Normal(0, scale) priors. With `autoscale` on, each
/// non-intercept coefficient's scale is divided by the sample standard
/// deviation of its column, mirroring common regression-default behaviour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorConfig {
    #[serde(default = "default_scale")]
    pub intercept_scale: f64,
    #[serde(default = "default_scale")]
    pub coef_scale: f64,
    #[serde(default = "default_true")]
    pub autoscale: bool,
}

fn default_scale() -> f64 {
    2.5
}

fn default_true() -> bool {
    true
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { intercept_scale: 2.5, coef_scale: 2.5, autoscale: true }
    }
}

/// Per-coefficient prior standard deviations, resolved against a design.
#[derive(Debug, Clone)]
pub struct PriorScales(pub Vec<f64>);

impl PriorConfig {
    pub fn scales_for(&self, x: &Array2<f64>, intercept: bool) -> Result<PriorScales> {
        if self.intercept_scale <= 0.0 || self.coef_scale <= 0.0 {
            return Err(Error::InvalidArgument("prior scales must be strictly positive".into()));
        }
        let p = x.ncols();
        let mut scales = Vec::with_capacity(p);
        for j in 0..p {
            if intercept && j == 0 {
                scales.push(self.intercept_scale);
            } else if self.autoscale {
                let sd = std_dev(&x.column(j).to_vec());
                // Constant columns keep the unscaled prior.
                scales.push(if sd > 1e-12 { self.coef_scale / sd } else { self.coef_scale });
            } else {
                scales.push(self.coef_scale);
            }
        }
        Ok(PriorScales(scales))
    }
}

/// One candidate model: outcome, main-effect terms, interaction terms, prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub outcome: String,
    pub terms: Vec<String>,
    #[serde(default)]
    pub interactions: Vec<(String, String)>,
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default)]
    pub prior: PriorConfig,
}

/// Checks the ensemble structure: the core's terms appear in every candidate,
/// and candidates are pairwise disjoint outside the core.
pub fn validate_ensemble(core: &ModelSpec, candidates: &[ModelSpec]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Invalid("at least one candidate model is required".into()));
    }
    for cand in candidates {
        for term in &core.terms {
            if !cand.terms.contains(term) {
                return Err(Error::Invalid(format!(
                    "candidate {} is missing core term {}",
                    cand.name, term
                )));
            }
        }
    }
    for (i, a) in candidates.iter().enumerate() {
        for b in candidates.iter().skip(i + 1) {
            for term in &a.terms {
                if core.terms.contains(term) {
                    continue;
                }
                if b.terms.contains(term) {
                    return Err(Error::Invalid(format!(
                        "candidates {} and {} share non-core term {}",
                        a.name, b.name, term
                    )));
                }
            }
        }
    }
    Ok(())
}

fn check_dims(beta: &[f64], x: &Array2<f64>, y: &[f64]) -> Result<()> {
    if beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "beta vs design width".into(),
            expected: x.ncols(),
            got: beta.len(),
        });
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            context: "outcome vs design rows".into(),
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidArgument("non-finite coefficient".into()));
    }
    Ok(())
}

fn linear_predictor(beta: &[f64], x: &Array2<f64>) -> Vec<f64> {
    let p = x.ncols();
    let mut eta = vec![0.0; x.nrows()];
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..p {
            acc += row[j] * beta[j];
        }
        eta[i] = acc;
    }
    eta
}

/// Bernoulli log likelihood: sum of `y*eta - log(1 + exp(eta))`. Always <= 0.
pub fn log_likelihood(beta: &[f64], x: &Array2<f64>, y: &[f64]) -> Result<f64> {
    check_dims(beta, x, y)?;
    let eta = linear_predictor(beta, x);
    Ok(eta.iter().zip(y).map(|(&e, &yi)| yi * e - log1p_exp(e)).sum())
}

/// Per-observation terms of [`log_likelihood`]; they sum to it.
pub fn pointwise_log_lik(beta: &[f64], x: &Array2<f64>, y: &[f64]) -> Result<Vec<f64>> {
    check_dims(beta, x, y)?;
    let eta = linear_predictor(beta, x);
    Ok(eta.iter().zip(y).map(|(&e, &yi)| yi * e - log1p_exp(e)).collect())
}

fn log_prior(beta: &[f64], scales: &PriorScales) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
    beta.iter()
        .zip(&scales.0)
        .map(|(&b, &s)| {
            let z = b / s;
            -0.5 * z * z - s.ln() - HALF_LN_2PI
        })
        .sum()
}

/// Log likelihood plus independent normal log prior densities.
pub fn log_posterior(beta: &[f64], x: &Array2<f64>, y: &[f64], scales: &PriorScales) -> Result<f64> {
    if scales.0.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            context: "prior scales vs beta".into(),
            expected: beta.len(),
            got: scales.0.len(),
        });
    }
    Ok(log_likelihood(beta, x, y)? + log_prior(beta, scales))
}

/// Analytic gradient: `X' (y - p) - beta / scale^2`.
pub fn grad_log_posterior(
    beta: &[f64],
    x: &Array2<f64>,
    y: &[f64],
    scales: &PriorScales,
) -> Result<Vec<f64>> {
    check_dims(beta, x, y)?;
    if scales.0.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            context: "prior scales vs beta".into(),
            expected: beta.len(),
            got: scales.0.len(),
        });
    }
    let p = x.ncols();
    let mut grad = vec![0.0; p];
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut eta = 0.0;
        for j in 0..p {
            eta += row[j] * beta[j];
        }
        let resid = y[i] - sigmoid(eta);
        for j in 0..p {
            grad[j] += row[j] * resid;
        }
    }
    for j in 0..p {
        grad[j] -= beta[j] / (scales.0[j] * scales.0[j]);
    }
    Ok(grad)
}

/// Inverse-logit predictions for new rows; entries lie in the open (0, 1).
pub fn predict_prob(beta: &[f64], x_new: &Array2<f64>) -> Result<Vec<f64>> {
    if beta.len() != x_new.ncols() {
        return Err(Error::DimensionMismatch {
            context: "beta vs prediction design width".into(),
            expected: x_new.ncols(),
            got: beta.len(),
        });
    }
    Ok(linear_predictor(beta, x_new).iter().map(|&e| sigmoid(e)).collect())
}

/// Prediction for a single encoded row.
pub fn predict_prob_row(beta: &[f64], row: &[f64]) -> f64 {
    let eta: f64 = beta.iter().zip(row).map(|(&b, &v)| b * v).sum();
    sigmoid(eta)
}

/// The sampling target: logistic posterior on an internally centered design.
///
/// Centering the non-intercept columns conditions the posterior geometry;
/// draws are mapped back to the natural parameterization via
/// [`LogisticPosterior::to_natural`].
#[derive(Debug, Clone)]
pub struct LogisticPosterior {
    x: Array2<f64>,
    y: Vec<f64>,
    scales: PriorScales,
    col_means: Vec<f64>,
    intercept: bool,
}

impl LogisticPosterior {
    pub fn new(x: &Array2<f64>, y: &[f64], prior: &PriorConfig, intercept: bool) -> Result<Self> {
        let scales = prior.scales_for(x, intercept)?;
        Ok(Self::with_scales(x, y, scales, intercept))
    }

    /// Builds the target with externally fixed prior scales (used by exact
    /// leave-one-out refits, which must keep the full-data prior).
    pub fn with_scales(x: &Array2<f64>, y: &[f64], scales: PriorScales, intercept: bool) -> Self {
        let mut xc = x.clone();
        let p = x.ncols();
        let mut col_means = vec![0.0; p];
        if intercept {
            for j in 1..p {
                let m = x.column(j).mean().unwrap_or(0.0);
                col_means[j] = m;
                for i in 0..x.nrows() {
                    xc[(i, j)] -= m;
                }
            }
        }
        LogisticPosterior { x: xc, y: y.to_vec(), scales, col_means, intercept }
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Log density and gradient in the centered parameterization.
    pub fn log_density_grad(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.x.ncols();
        let mut logp = 0.0;
        grad.fill(0.0);
        for (i, row) in self.x.rows().into_iter().enumerate() {
            let mut eta = 0.0;
            for j in 0..p {
                eta += row[j] * beta[j];
            }
            logp += self.y[i] * eta - log1p_exp(eta);
            let resid = self.y[i] - sigmoid(eta);
            for j in 0..p {
                grad[j] += row[j] * resid;
            }
        }
        for j in 0..p {
            let s = self.scales.0[j];
            let z = beta[j] / s;
            logp += -0.5 * z * z - s.ln() - 0.918_938_533_204_672_7;
            grad[j] -= beta[j] / (s * s);
        }
        logp
    }

    /// Maps a centered draw back to natural coordinates.
    pub fn to_natural(&self, beta_centered: &[f64]) -> Vec<f64> {
        let mut beta = beta_centered.to_vec();
        if self.intercept {
            let shift: f64 = (1..beta.len()).map(|j| beta[j] * self.col_means[j]).sum();
            beta[0] -= shift;
        }
        beta
    }

    pub fn scales(&self) -> &PriorScales {
        &self.scales
    }
}

/// Builds the sampling target straight from a design matrix.
pub fn posterior_for(design: &DesignMatrix, prior: &PriorConfig) -> Result<LogisticPosterior> {
    LogisticPosterior::new(&design.x, &design.y, prior, design.intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_scales(p: usize) -> PriorScales {
        PriorScales(vec![1.0; p])
    }

    #[test]
    fn zero_beta_gives_log_half_per_row() {
        let x = arr2(&[[1.0], [1.0], [1.0], [1.0]]);
        let y = [1.0, 0.0, 1.0, 0.0];
        let ll = log_likelihood(&[0.0], &x, &y).unwrap();
        assert_relative_eq!(ll, 4.0 * 0.5f64.ln(), max_relative = 1e-14);
        let pw = pointwise_log_lik(&[0.0], &x, &y).unwrap();
        assert!(pw.iter().all(|&v| (v - 0.5f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn saturated_positive_eta_gives_zero_loglik_for_one() {
        let x = arr2(&[[1.0]]);
        let y = [1.0];
        let ll = log_likelihood(&[800.0], &x, &y).unwrap();
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn three_row_loglik_matches_bernoulli_product_oracle() {
        // Direct evaluation of the Bernoulli log-pmf sum with p = sigmoid(0.5)
        // per row and y = (1, 0, 1).
        let p = sigmoid(0.5);
        let oracle = (p * (1.0 - p) * p).ln();
        let x = arr2(&[[1.0], [1.0], [1.0]]);
        let y = [1.0, 0.0, 1.0];
        let ll = log_likelihood(&[0.5], &x, &y).unwrap();
        assert_relative_eq!(ll, oracle, max_relative = 1e-14);
        assert_relative_eq!(ll, -1.922230952540321, max_relative = 1e-12);
    }

    #[test]
    fn pointwise_terms_sum_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 60;
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let beta = [0.3, -0.7, 1.2];
        let total = log_likelihood(&beta, &x, &y).unwrap();
        let pw = pointwise_log_lik(&beta, &x, &y).unwrap();
        let sum: f64 = pw.iter().sum();
        assert_relative_eq!(sum, total, max_relative = 1e-12);
    }

    #[test]
    fn pointwise_log_point_nine() {
        // One row with p = 0.9: eta = logit(0.9), y = 1.
        let eta = (0.9f64 / 0.1).ln();
        let x = arr2(&[[1.0]]);
        let pw = pointwise_log_lik(&[eta], &x, &[1.0]).unwrap();
        assert_relative_eq!(pw[0], 0.9f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(pw[0], -0.10536051565782628, max_relative = 1e-10);
    }

    #[test]
    fn non_finite_beta_is_rejected() {
        let x = arr2(&[[1.0]]);
        assert!(log_likelihood(&[f64::NAN], &x, &[1.0]).is_err());
        assert!(log_likelihood(&[f64::INFINITY], &x, &[0.0]).is_err());
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 30;
            let p = 5;
            let x = Array2::from_shape_fn((n, p), |_| rng.gen::<f64>() * 2.0 - 1.0);
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
            let beta: Vec<f64> = (0..p).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let scales = PriorScales((0..p).map(|_| 0.5 + rng.gen::<f64>()).collect());

            let grad = grad_log_posterior(&beta, &x, &y, &scales).unwrap();
            let h = 1e-5;
            for j in 0..p {
                let mut bp = beta.clone();
                let mut bm = beta.clone();
                bp[j] += h;
                bm[j] -= h;
                let fd = (log_posterior(&bp, &x, &y, &scales).unwrap()
                    - log_posterior(&bm, &x, &y, &scales).unwrap())
                    / (2.0 * h);
                let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1.0);
                assert!(rel < 1e-6, "coef {j}: grad {} vs fd {fd}", grad[j]);
            }
        }
    }

    #[test]
    fn intercept_gradient_vanishes_at_balanced_symmetric_point() {
        // All-zero non-intercept columns and balanced outcome force p = 0.5.
        let x = arr2(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        let y = [1.0, 0.0, 1.0, 0.0];
        let grad = grad_log_posterior(&[0.0, 0.0], &x, &y, &unit_scales(2)).unwrap();
        assert_eq!(grad[0], 0.0);
    }

    #[test]
    fn log_posterior_decays_for_large_beta() {
        let x = arr2(&[[1.0, 0.3], [1.0, -0.2], [1.0, 0.9]]);
        let y = [1.0, 0.0, 1.0];
        let scales = unit_scales(2);
        let at_zero = log_posterior(&[0.0, 0.0], &x, &y, &scales).unwrap();
        let far = log_posterior(&[80.0, -80.0], &x, &y, &scales).unwrap();
        assert!(far < at_zero - 1000.0);
    }

    #[test]
    fn predict_prob_reference_points() {
        let x = arr2(&[[1.0]]);
        assert_relative_eq!(predict_prob(&[0.0], &x).unwrap()[0], 0.5);
        // Inverse logit of the intercept-only coefficient 0.0820.
        assert_relative_eq!(predict_prob(&[0.0820], &x).unwrap()[0], 0.5204870, epsilon = 5e-6);
        assert_relative_eq!(
            predict_prob(&[-10.0], &x).unwrap()[0],
            4.5397868702434395e-5,
            max_relative = 1e-10
        );
    }

    #[test]
    fn predict_prob_monotone_in_coefficient() {
        let x = arr2(&[[1.0, 0.7], [1.0, 0.1]]);
        let lo = predict_prob(&[0.2, 0.5], &x).unwrap();
        let hi = predict_prob(&[0.2, 1.5], &x).unwrap();
        for i in 0..2 {
            assert!(hi[i] > lo[i]);
        }
    }

    #[test]
    fn log_likelihood_invariant_under_row_permutation() {
        let x = arr2(&[[1.0, 0.2], [1.0, -0.4], [1.0, 1.3]]);
        let xp = arr2(&[[1.0, 1.3], [1.0, 0.2], [1.0, -0.4]]);
        let y = [1.0, 0.0, 1.0];
        let yp = [1.0, 1.0, 0.0];
        let beta = [0.4, -0.9];
        assert_relative_eq!(
            log_likelihood(&beta, &x, &y).unwrap(),
            log_likelihood(&beta, &xp, &yp).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn centered_posterior_round_trips_to_natural() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let x = Array2::from_shape_fn((n, 3), |(_, j)| {
            if j == 0 {
                1.0
            } else {
                rng.gen::<f64>() * 3.0 + 1.0
            }
        });
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.4))).collect();
        let prior = PriorConfig::default();
        let target = LogisticPosterior::new(&x, &y, &prior, true).unwrap();

        // The centered likelihood at a centered point equals the natural
        // likelihood at the mapped point.
        let bc = [0.2, -0.5, 0.8];
        let mut grad = vec![0.0; 3];
        let _ = target.log_density_grad(&bc, &mut grad);
        let natural = target.to_natural(&bc);
        let eta_c: f64 = {
            let xc_row0: Vec<f64> = (0..3).map(|j| target.x[(0, j)]).collect();
            xc_row0.iter().zip(&bc).map(|(a, b)| a * b).sum()
        };
        let eta_n: f64 = x.row(0).iter().zip(&natural).map(|(a, b)| a * b).sum();
        assert_relative_eq!(eta_c, eta_n, max_relative = 1e-12);
    }

    #[test]
    fn ensemble_validation_catches_overlap_and_missing_core() {
        let core = ModelSpec {
            name: "core".into(),
            outcome: "y".into(),
            terms: vec!["FEM".into()],
            interactions: vec![],
            intercept: true,
            prior: PriorConfig::default(),
        };
        let mut c1 = core.clone();
        c1.name = "c1".into();
        c1.terms = vec!["FEM".into(), "A".into()];
        let mut c2 = core.clone();
        c2.name = "c2".into();
        c2.terms = vec!["FEM".into(), "A".into()];
        let err = validate_ensemble(&core, &[c1.clone(), c2]).unwrap_err();
        assert!(err.to_string().contains("share non-core term"));

        let mut c3 = core.clone();
        c3.name = "c3".into();
        c3.terms = vec!["B".into()];
        let err = validate_ensemble(&core, &[c3]).unwrap_err();
        assert!(err.to_string().contains("missing core term"));

        assert!(validate_ensemble(&core, &[c1]).is_ok());
    }
}
