//! Posterior sampling via adaptive Hamiltonian Monte Carlo, plus convergence
//! diagnostics and the draw-store file format.

mod diagnostics;
mod nuts;

pub use diagnostics::{diagnose, ess_of_sequences, Diagnostics};

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::{posterior_for, LogisticPosterior, PriorConfig};
use crate::rng::{stream_rng, Domain};
use nuts::{
    find_reasonable_step, fixed_hmc_transition, leapfrog, nuts_transition, sample_momentum,
    DualAverage, RunningVariance, State, WarmupSchedule,
};

/// A differentiable unnormalized log density.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Evaluates the log density at `position`, writing the gradient.
    fn logp_grad(&self, position: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for LogisticPosterior {
    fn dim(&self) -> usize {
        LogisticPosterior::dim(self)
    }

    fn logp_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        self.log_density_grad(position, grad)
    }
}

/// Trajectory scheme: dynamic no-U-turn doubling by default, or fixed-length
/// trajectories for debugging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    Nuts,
    FixedHmc { steps: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Retained iterations per chain.
    pub draws: usize,
    pub target_accept: f64,
    /// Cap on leapfrog steps per iteration; the tree depth is its log2.
    pub max_leapfrog: usize,
    pub seed: u64,
    #[serde(default = "default_trajectory")]
    pub trajectory: Trajectory,
}

fn default_trajectory() -> Trajectory {
    Trajectory::Nuts
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            target_accept: 0.8,
            max_leapfrog: 1024,
            seed: 0,
            trajectory: Trajectory::Nuts,
        }
    }
}

impl SamplerConfig {
    fn max_depth(&self) -> usize {
        (self.max_leapfrog.max(2) as f64).log2().floor() as usize
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.draws
    }
}

/// Retained draws with chain provenance and per-chain adaptation state.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// S×p, chains stacked in order.
    pub draws: Array2<f64>,
    pub param_names: Vec<String>,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub step_sizes: Vec<f64>,
    pub inv_mass: Vec<Vec<f64>>,
    /// Post-warmup divergences per chain.
    pub divergences: Vec<usize>,
    /// Post-warmup iterations that hit the leapfrog cap, per chain.
    pub depth_saturations: Vec<usize>,
    pub seed: u64,
}

impl PosteriorDraws {
    pub fn total(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn chain(&self, c: usize) -> ArrayView2<'_, f64> {
        let start = c * self.draws_per_chain;
        self.draws.slice(ndarray::s![start..start + self.draws_per_chain, ..])
    }

    pub fn chain_of_row(&self, s: usize) -> usize {
        s / self.draws_per_chain
    }

    pub fn total_divergences(&self) -> usize {
        self.divergences.iter().sum()
    }

    /// Draw-store CSV: `chain,iteration,<param columns>` at full precision.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.param_names.iter().cloned());
        writeln!(out, "{}", header.join(","))?;
        for s in 0..self.total() {
            let chain = self.chain_of_row(s);
            let iter = s % self.draws_per_chain;
            let mut row = vec![chain.to_string(), iter.to_string()];
            row.extend(self.draws.row(s).iter().map(|v| format!("{v:.16e}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a draw-store CSV back. Adaptation metadata lives in the JSON
    /// sidecar, not here, so those fields come back empty.
    pub fn read_csv(path: &std::path::Path) -> Result<PosteriorDraws> {
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
        if headers.len() < 3 || headers[0] != "chain" || headers[1] != "iteration" {
            return Err(Error::Invalid(format!(
                "{} is not a draw store (expected chain,iteration,... header)",
                path.display()
            )));
        }
        let param_names: Vec<String> = headers[2..].to_vec();
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for record in reader.records() {
            let record =
                record.map_err(|e| Error::Csv { path: path.display().to_string(), source: e })?;
            let chain: usize = record[0]
                .parse()
                .map_err(|_| Error::Invalid(format!("bad chain id {:?}", &record[0])))?;
            let values: std::result::Result<Vec<f64>, _> =
                record.iter().skip(2).map(|v| v.parse::<f64>()).collect();
            let values =
                values.map_err(|_| Error::Invalid(format!("bad draw row in {}", path.display())))?;
            rows.push((chain, values));
        }
        if rows.is_empty() {
            return Err(Error::Invalid(format!("{} holds no draws", path.display())));
        }
        let chains = rows.iter().map(|(c, _)| *c).max().unwrap() + 1;
        if rows.len() % chains != 0 {
            return Err(Error::Invalid("chain labels do not partition rows evenly".into()));
        }
        let p = param_names.len();
        let mut draws = Array2::zeros((rows.len(), p));
        for (s, (_, values)) in rows.iter().enumerate() {
            if values.len() != p {
                return Err(Error::Invalid("ragged draw row".into()));
            }
            for j in 0..p {
                draws[(s, j)] = values[j];
            }
        }
        Ok(PosteriorDraws {
            draws,
            param_names,
            chains,
            draws_per_chain: rows.len() / chains,
            step_sizes: Vec::new(),
            inv_mass: Vec::new(),
            divergences: Vec::new(),
            depth_saturations: Vec::new(),
            seed: 0,
        })
    }
}

struct ChainOutput {
    draws: Array2<f64>,
    step_size: f64,
    inv_mass: Vec<f64>,
    divergences: usize,
    depth_saturations: usize,
}

fn init_state<T: LogDensity>(
    target: &T,
    rng: &mut rand_chacha::ChaCha8Rng,
    jitter: f64,
) -> Result<State> {
    let dim = target.dim();
    for _ in 0..=100 {
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-jitter..=jitter)).collect();
        let mut grad = vec![0.0; dim];
        let logp = target.logp_grad(&q, &mut grad);
        if logp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(State { q, r: vec![0.0; dim], grad, logp });
        }
    }
    Err(Error::BadInit { retries: 100 })
}

fn run_chain<T: LogDensity>(
    target: &T,
    config: &SamplerConfig,
    chain_id: usize,
) -> Result<ChainOutput> {
    let mut rng = stream_rng(config.seed, Domain::SamplerChain(chain_id as u64));
    let dim = target.dim();
    let mut state = init_state(target, &mut rng, 0.1)?;
    let mut inv_mass = vec![1.0; dim];
    let mut step = find_reasonable_step(target, &mut rng, &state, &inv_mass);
    let mut adapt = DualAverage::new(step, config.target_accept);
    let schedule = WarmupSchedule::new(config.warmup);
    let mut window = RunningVariance::new(dim);
    let max_depth = config.max_depth();

    let transition = |state: &State, step: f64, inv_mass: &[f64], rng: &mut rand_chacha::ChaCha8Rng| {
        match config.trajectory {
            Trajectory::Nuts => nuts_transition(target, rng, state, step, inv_mass, max_depth),
            Trajectory::FixedHmc { steps } => {
                fixed_hmc_transition(target, rng, state, step, inv_mass, steps)
            }
        }
    };

    let mut warmup_divergences = 0usize;
    for it in 0..config.warmup {
        let out = transition(&state, step, &inv_mass, &mut rng);
        if out.divergent {
            warmup_divergences += 1;
        }
        state = out.state;
        adapt.update(out.accept_prob);
        step = adapt.current();
        if schedule.collecting(it) {
            window.add(&state.q);
        }
        if schedule.window_closes(it) {
            if let Some(variances) = window.regularized() {
                inv_mass = variances;
            }
            window.reset();
            step = find_reasonable_step(target, &mut rng, &state, &inv_mass);
            adapt = DualAverage::new(step, config.target_accept);
        }
    }
    if config.warmup > 0 && warmup_divergences == config.warmup {
        return Err(Error::AllDivergentWarmup);
    }
    step = adapt.finalized();

    let mut draws = Array2::zeros((config.draws, dim));
    let mut divergences = 0usize;
    let mut depth_saturations = 0usize;
    for it in 0..config.draws {
        let out = transition(&state, step, &inv_mass, &mut rng);
        if out.divergent {
            divergences += 1;
        }
        if out.depth_saturated {
            depth_saturations += 1;
        }
        state = out.state;
        for j in 0..dim {
            draws[(it, j)] = state.q[j];
        }
    }

    Ok(ChainOutput { draws, step_size: step, inv_mass, divergences, depth_saturations })
}

static THREAD_CAP: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(0);

/// Caps the number of chains sampled concurrently (0 restores "all at
/// once"). Chains hold independent RNG streams, so the cap changes
/// scheduling only, never results.
pub fn set_thread_cap(threads: usize) {
    THREAD_CAP.store(threads, std::sync::atomic::Ordering::SeqCst);
}

fn thread_cap() -> usize {
    match THREAD_CAP.load(std::sync::atomic::Ordering::SeqCst) {
        0 => usize::MAX,
        n => n,
    }
}

/// Draws `chains × draws` retained samples after adaptive warmup. Chains run
/// on independent RNG streams and never share state, so the result is
/// reproducible for a given seed regardless of scheduling.
pub fn sample<T: LogDensity>(target: &T, config: &SamplerConfig) -> Result<PosteriorDraws> {
    if config.chains == 0 {
        return Err(Error::InvalidArgument("need at least one chain".into()));
    }
    if target.dim() == 0 {
        return Err(Error::InvalidArgument("target dimension must be at least 1".into()));
    }

    let batch = thread_cap().min(config.chains).max(1);
    let chain_ids: Vec<usize> = (0..config.chains).collect();
    let mut outputs: Vec<Result<ChainOutput>> = Vec::with_capacity(config.chains);
    for ids in chain_ids.chunks(batch) {
        let chunk: Vec<Result<ChainOutput>> = std::thread::scope(|scope| {
            let handles: Vec<_> = ids
                .iter()
                .map(|&c| scope.spawn(move || run_chain(target, config, c)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
        });
        outputs.extend(chunk);
    }

    let mut chain_outputs = Vec::with_capacity(config.chains);
    for out in outputs {
        chain_outputs.push(out?);
    }

    let dim = target.dim();
    let mut draws = Array2::zeros((config.chains * config.draws, dim));
    for (c, out) in chain_outputs.iter().enumerate() {
        for it in 0..config.draws {
            for j in 0..dim {
                draws[(c * config.draws + it, j)] = out.draws[(it, j)];
            }
        }
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("sampler produced non-finite draws".into()));
    }

    Ok(PosteriorDraws {
        draws,
        param_names: (0..dim).map(|j| format!("p{j}")).collect(),
        chains: config.chains,
        draws_per_chain: config.draws,
        step_sizes: chain_outputs.iter().map(|o| o.step_size).collect(),
        inv_mass: chain_outputs.iter().map(|o| o.inv_mass.clone()).collect(),
        divergences: chain_outputs.iter().map(|o| o.divergences).collect(),
        depth_saturations: chain_outputs.iter().map(|o| o.depth_saturations).collect(),
        seed: config.seed,
    })
}

/// Fits a logistic regression on a design: samples the internally centered
/// posterior and maps every draw back to the natural coefficients.
pub fn fit_logistic(
    design: &DesignMatrix,
    prior: &PriorConfig,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    let target = posterior_for(design, prior)?;
    let mut out = sample(&target, config)?;
    for mut row in out.draws.rows_mut() {
        let natural = target.to_natural(&row.to_vec());
        for (j, v) in natural.into_iter().enumerate() {
            row[j] = v;
        }
    }
    out.param_names = design.labels.clone();
    Ok(out)
}

/// Energy error of a single tiny leapfrog step; exposed for integrator checks.
pub fn leapfrog_energy_error<T: LogDensity>(target: &T, q0: &[f64], step: f64, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, Domain::SamplerInit);
    let dim = target.dim();
    let inv_mass = vec![1.0; dim];
    let mut grad = vec![0.0; dim];
    let logp = target.logp_grad(q0, &mut grad);
    let r = sample_momentum(&mut rng, &inv_mass);
    let start = State { q: q0.to_vec(), r, grad, logp };
    let joint0 = start.logp
        - 0.5 * start.r.iter().zip(&inv_mass).map(|(&ri, &vi)| vi * ri * ri).sum::<f64>();
    let next = leapfrog(target, &start, step, &inv_mass);
    let joint1 =
        next.logp - 0.5 * next.r.iter().zip(&inv_mass).map(|(&ri, &vi)| vi * ri * ri).sum::<f64>();
    (joint1 - joint0).abs()
}
