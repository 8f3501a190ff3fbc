//! Convergence diagnostics: rank-normalized split R-hat, bulk ESS, and tail
//! ESS with Geyer initial-monotone truncation of the autocorrelation sum.

use serde::Serialize;

use super::PosteriorDraws;
use crate::error::{Error, Result};
use crate::math::{inverse_normal_cdf, mean, quantile, variance};

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub param_names: Vec<String>,
    /// Rank-normalized split R-hat per parameter.
    pub rhat: Vec<f64>,
    pub ess_bulk: Vec<f64>,
    pub ess_tail: Vec<f64>,
    pub divergences: usize,
    pub depth_saturations: usize,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Name and value of the worst-converged parameter.
    pub fn worst_parameter(&self) -> Option<(&str, f64)> {
        self.rhat
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, &r)| (self.param_names[i].as_str(), r))
    }
}

/// Splits each chain in half (dropping one trailing draw when odd).
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        let n = chain.len() / 2 * 2;
        let mid = n / 2;
        out.push(chain[..mid].to_vec());
        out.push(chain[mid..n].to_vec());
    }
    out
}

/// Pooled average ranks pushed through the inverse normal CDF
/// (the (r - 3/8) / (N + 1/4) convention).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (ci, chain) in chains.iter().enumerate() {
        for (ii, &v) in chain.iter().enumerate() {
            indexed.push((v, ci, ii));
        }
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN draw in rank_normalize"));

    let mut ranks = vec![vec![0.0; 0]; chains.len()];
    for (ci, chain) in chains.iter().enumerate() {
        ranks[ci] = vec![0.0; chain.len()];
    }
    // Average ranks over ties.
    let mut i = 0;
    while i < indexed.len() {
        let mut j = i;
        while j + 1 < indexed.len() && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for item in indexed.iter().take(j + 1).skip(i) {
            ranks[item.1][item.2] = avg_rank;
        }
        i = j + 1;
    }

    let n = total as f64;
    ranks
        .into_iter()
        .map(|chain| {
            chain
                .into_iter()
                .map(|r| inverse_normal_cdf((r - 0.375) / (n + 0.25)))
                .collect()
        })
        .collect()
}

/// Split-chain potential scale reduction on already-transformed sequences.
fn rhat_of_sequences(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len() as f64;
    let n = seqs[0].len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let w = seqs.iter().map(|s| variance(s)).sum::<f64>() / m;
    let b = n * variance(&means);
    if w < 1e-300 {
        // All sequences constant: nothing to converge.
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Multi-chain ESS: combined autocorrelation with Geyer pairing, truncated at
/// the first non-positive pair and forced monotone non-increasing.
pub fn ess_of_sequences(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len() as f64;
    let n_iter = seqs[0].len();
    let total = m * n_iter as f64;
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let vars: Vec<f64> = seqs.iter().map(|s| variance(s)).collect();
    let w = vars.iter().sum::<f64>() / m;
    let b = n_iter as f64 * variance(&means);
    let var_plus = (n_iter as f64 - 1.0) / n_iter as f64 * w + b / n_iter as f64;
    if var_plus < 1e-300 {
        return total;
    }

    // Biased per-chain autocovariances, averaged across chains.
    let acov_at = |t: usize| -> f64 {
        let mut acc = 0.0;
        for (s, &mu) in seqs.iter().zip(&means) {
            let mut c = 0.0;
            for i in 0..(n_iter - t) {
                c += (s[i] - mu) * (s[i + t] - mu);
            }
            acc += c / (n_iter - 1) as f64;
        }
        acc / m
    };

    let max_lag = n_iter.saturating_sub(1);
    let rho = |t: usize| -> f64 {
        if t == 0 {
            1.0
        } else {
            1.0 - (w - acov_at(t)) / var_plus
        }
    };

    let mut pair_sums: Vec<f64> = Vec::new();
    let mut k = 0usize;
    loop {
        let even = 2 * k;
        if even > max_lag {
            break;
        }
        let odd = even + 1;
        let p = rho(even) + if odd <= max_lag { rho(odd) } else { 0.0 };
        if k > 0 && p <= 0.0 {
            break;
        }
        pair_sums.push(p.max(0.0));
        k += 1;
        if k > max_lag {
            break;
        }
    }
    // Initial monotone sequence.
    for i in 1..pair_sums.len() {
        if pair_sums[i] > pair_sums[i - 1] {
            pair_sums[i] = pair_sums[i - 1];
        }
    }
    let tau = (-1.0 + 2.0 * pair_sums.iter().sum::<f64>()).max(1.0 / (total).log10().max(1.0));
    (total / tau).min(total)
}

fn tail_ess(split: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = split.iter().flatten().copied().collect();
    let q05 = quantile(&pooled, 0.05);
    let q95 = quantile(&pooled, 0.95);
    let lower: Vec<Vec<f64>> = split
        .iter()
        .map(|s| s.iter().map(|&x| f64::from(x <= q05)).collect())
        .collect();
    let upper: Vec<Vec<f64>> = split
        .iter()
        .map(|s| s.iter().map(|&x| f64::from(x >= q95)).collect())
        .collect();
    ess_of_sequences(&lower).min(ess_of_sequences(&upper))
}

/// Computes all convergence diagnostics for a multi-chain draw store.
pub fn diagnose(draws: &PosteriorDraws) -> Result<Diagnostics> {
    if draws.chains < 2 {
        return Err(Error::TooFewChains { needed: 2, got: draws.chains });
    }
    if draws.draws_per_chain < 4 {
        return Err(Error::Invalid(format!(
            "diagnostics need at least 4 draws per chain, got {}",
            draws.draws_per_chain
        )));
    }

    let p = draws.dim();
    let mut rhat = Vec::with_capacity(p);
    let mut ess_bulk = Vec::with_capacity(p);
    let mut ess_tail_v = Vec::with_capacity(p);

    for j in 0..p {
        let chains: Vec<Vec<f64>> =
            (0..draws.chains).map(|c| draws.chain(c).column(j).to_vec()).collect();
        let split = split_chains(&chains);
        let normalized = rank_normalize(&split);
        rhat.push(rhat_of_sequences(&normalized));
        ess_bulk.push(ess_of_sequences(&normalized));
        ess_tail_v.push(tail_ess(&split));
    }

    Ok(Diagnostics {
        param_names: draws.param_names.clone(),
        rhat,
        ess_bulk,
        ess_tail: ess_tail_v,
        divergences: draws.total_divergences(),
        depth_saturations: draws.depth_saturations.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn draws_from_chains(chains: Vec<Vec<f64>>) -> PosteriorDraws {
        let c = chains.len();
        let n = chains[0].len();
        let mut m = Array2::zeros((c * n, 1));
        for (ci, chain) in chains.iter().enumerate() {
            for (i, &v) in chain.iter().enumerate() {
                m[(ci * n + i, 0)] = v;
            }
        }
        PosteriorDraws {
            draws: m,
            param_names: vec!["b0".into()],
            chains: c,
            draws_per_chain: n,
            step_sizes: vec![],
            inv_mass: vec![],
            divergences: vec![0; c],
            depth_saturations: vec![0; c],
            seed: 0,
        }
    }

    fn iid_chains(chains: usize, n: usize, shift: &[f64]) -> Vec<Vec<f64>> {
        (0..chains)
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + c as u64);
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) + shift[c]).collect()
            })
            .collect()
    }

    #[test]
    fn iid_chains_have_rhat_near_one() {
        let d = draws_from_chains(iid_chains(4, 1000, &[0.0; 4]));
        let diag = diagnose(&d).unwrap();
        assert!(diag.rhat[0] < 1.01, "rhat {}", diag.rhat[0]);
    }

    #[test]
    fn offset_chains_are_flagged() {
        // With complete separation, rank normalization saturates the split
        // R-hat near sqrt(1 + n*var(means)/W) of the normal scores, about
        // 1.83 for two chains; anything above 1.7 is an unambiguous flag.
        let d = draws_from_chains(iid_chains(2, 1000, &[0.0, 10.0]));
        let diag = diagnose(&d).unwrap();
        assert!(diag.rhat[0] > 1.7, "rhat {}", diag.rhat[0]);
    }

    #[test]
    fn iid_bulk_ess_close_to_total() {
        let d = draws_from_chains(iid_chains(4, 1000, &[0.0; 4]));
        let diag = diagnose(&d).unwrap();
        let s = 4000.0;
        assert!(
            (diag.ess_bulk[0] - s).abs() / s < 0.15,
            "bulk ESS {} vs {}",
            diag.ess_bulk[0],
            s
        );
        assert!(diag.ess_bulk[0] <= s);
        assert!(diag.ess_tail[0] > 0.0 && diag.ess_tail[0] <= s);
    }

    #[test]
    fn autocorrelated_chains_lose_ess() {
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(c);
                let mut x = 0.0f64;
                (0..1000)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        x = 0.95 * x + z * (1.0f64 - 0.95 * 0.95).sqrt();
                        x
                    })
                    .collect()
            })
            .collect();
        let d = draws_from_chains(chains);
        let diag = diagnose(&d).unwrap();
        assert!(diag.ess_bulk[0] < 1000.0, "ess {}", diag.ess_bulk[0]);
    }

    #[test]
    fn single_chain_is_an_error() {
        let d = draws_from_chains(iid_chains(1, 100, &[0.0]));
        assert!(matches!(diagnose(&d).unwrap_err(), Error::TooFewChains { .. }));
    }

    #[test]
    fn constant_parameter_reports_converged() {
        let d = draws_from_chains(vec![vec![2.0; 100], vec![2.0; 100]]);
        let diag = diagnose(&d).unwrap();
        assert_eq!(diag.rhat[0], 1.0);
    }
}
