//! Adaptive Hamiltonian Monte Carlo: leapfrog integration, dynamic
//! multinomial trajectory doubling with a no-U-turn criterion, dual-averaging
//! step-size adaptation, and windowed diagonal mass-matrix estimation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;

/// Energy error beyond which a transition is declared divergent.
const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// A phase-space point with cached density and gradient.
#[derive(Clone)]
pub(super) struct State {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl State {
    /// Log joint density of (position, momentum); the negative Hamiltonian.
    fn log_joint(&self, inv_mass: &[f64]) -> f64 {
        self.logp - kinetic(&self.r, inv_mass)
    }
}

fn kinetic(r: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * r.iter().zip(inv_mass).map(|(&ri, &vi)| vi * ri * ri).sum::<f64>()
}

pub(super) fn sample_momentum(rng: &mut ChaCha8Rng, inv_mass: &[f64]) -> Vec<f64> {
    inv_mass
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            z / v.sqrt()
        })
        .collect()
}

/// One leapfrog step; `direction` flips the sign of the step size.
pub(super) fn leapfrog<T: LogDensity>(
    target: &T,
    state: &State,
    step: f64,
    inv_mass: &[f64],
) -> State {
    let dim = state.q.len();
    let mut r: Vec<f64> = (0..dim).map(|j| state.r[j] + 0.5 * step * state.grad[j]).collect();
    let q: Vec<f64> = (0..dim).map(|j| state.q[j] + step * inv_mass[j] * r[j]).collect();
    let mut grad = vec![0.0; dim];
    let logp = target.logp_grad(&q, &mut grad);
    for j in 0..dim {
        r[j] += 0.5 * step * grad[j];
    }
    State { q, r, grad, logp }
}

/// A (sub)trajectory: endpoints, a multinomial proposal, and summary weights.
struct Tree {
    leftmost: State,
    rightmost: State,
    proposal: State,
    /// logsumexp of `log_joint - log_joint0` over the leaves.
    log_sum_weight: f64,
    /// Sum of momenta over the leaves, for the U-turn criterion.
    rho: Vec<f64>,
    sum_accept: f64,
    n_leapfrog: usize,
    divergent: bool,
    turning: bool,
}

fn is_uturn(rho: &[f64], left: &State, right: &State, inv_mass: &[f64]) -> bool {
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    for j in 0..rho.len() {
        fwd += rho[j] * inv_mass[j] * right.r[j];
        bwd += rho[j] * inv_mass[j] * left.r[j];
    }
    fwd <= 0.0 || bwd <= 0.0
}

struct TreeContext<'a, T: LogDensity> {
    target: &'a T,
    inv_mass: &'a [f64],
    step: f64,
    log_joint0: f64,
}

fn build_leaf<T: LogDensity>(ctx: &TreeContext<'_, T>, from: &State, direction: f64) -> Tree {
    let next = leapfrog(ctx.target, from, direction * ctx.step, ctx.inv_mass);
    let log_joint = next.log_joint(ctx.inv_mass);
    let log_weight = if log_joint.is_finite() {
        log_joint - ctx.log_joint0
    } else {
        f64::NEG_INFINITY
    };
    let divergent = !(log_weight > -DIVERGENCE_THRESHOLD);
    let accept = log_weight.min(0.0).exp();
    Tree {
        rho: next.r.clone(),
        leftmost: next.clone(),
        rightmost: next.clone(),
        proposal: next,
        log_sum_weight: log_weight,
        sum_accept: accept,
        n_leapfrog: 1,
        divergent,
        turning: false,
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Builds a balanced subtree of `depth` doublings in `direction`.
fn build_tree<T: LogDensity>(
    ctx: &TreeContext<'_, T>,
    rng: &mut ChaCha8Rng,
    from: &State,
    direction: f64,
    depth: usize,
) -> Tree {
    if depth == 0 {
        return build_leaf(ctx, from, direction);
    }
    let first = build_tree(ctx, rng, from, direction, depth - 1);
    if first.divergent || first.turning {
        return first;
    }
    let grow_from = if direction > 0.0 { first.rightmost.clone() } else { first.leftmost.clone() };
    let second = build_tree(ctx, rng, &grow_from, direction, depth - 1);

    let divergent = second.divergent;
    let mut turning = second.turning;
    let log_sum_weight = log_add_exp(first.log_sum_weight, second.log_sum_weight);

    // Multinomial sampling between the two halves.
    let take_second = if second.log_sum_weight == f64::NEG_INFINITY {
        false
    } else {
        let logp_second = second.log_sum_weight - log_sum_weight;
        rng.gen::<f64>().ln() < logp_second
    };

    let (leftmost, rightmost) = if direction > 0.0 {
        (first.leftmost.clone(), second.rightmost.clone())
    } else {
        (second.leftmost.clone(), first.rightmost.clone())
    };
    let rho: Vec<f64> =
        first.rho.iter().zip(&second.rho).map(|(a, b)| a + b).collect();
    if !divergent && !turning {
        turning = is_uturn(&rho, &leftmost, &rightmost, ctx.inv_mass);
    }

    Tree {
        leftmost,
        rightmost,
        proposal: if take_second { second.proposal } else { first.proposal },
        log_sum_weight,
        rho,
        sum_accept: first.sum_accept + second.sum_accept,
        n_leapfrog: first.n_leapfrog + second.n_leapfrog,
        divergent,
        turning,
    }
}

pub(super) struct Transition {
    pub state: State,
    pub accept_prob: f64,
    pub divergent: bool,
    pub depth_saturated: bool,
}

/// One NUTS update: grow the trajectory by doubling until a U-turn,
/// divergence, or the depth cap, sampling a state multinomially by density.
pub(super) fn nuts_transition<T: LogDensity>(
    target: &T,
    rng: &mut ChaCha8Rng,
    current: &State,
    step: f64,
    inv_mass: &[f64],
    max_depth: usize,
) -> Transition {
    let r = sample_momentum(rng, inv_mass);
    let mut state = State { q: current.q.clone(), r, grad: current.grad.clone(), logp: current.logp };
    let log_joint0 = state.log_joint(inv_mass);
    let ctx = TreeContext { target, inv_mass, step, log_joint0 };

    let mut leftmost = state.clone();
    let mut rightmost = state.clone();
    let mut rho = state.r.clone();
    // The initial state enters the multinomial pool with weight exp(0) = 1.
    let mut log_sum_weight = 0.0;
    let mut sum_accept = 0.0;
    let mut n_leapfrog = 0usize;
    let mut divergent = false;
    let mut saturated = true;

    for depth in 0..max_depth {
        let direction: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let from = if direction > 0.0 { rightmost.clone() } else { leftmost.clone() };
        let subtree = build_tree(&ctx, rng, &from, direction, depth);
        sum_accept += subtree.sum_accept;
        n_leapfrog += subtree.n_leapfrog;

        if subtree.divergent {
            divergent = true;
            saturated = false;
            break;
        }
        if subtree.turning {
            saturated = false;
            break;
        }

        // Biased progressive sampling favors the fresh half.
        let accept_new = subtree.log_sum_weight - log_sum_weight;
        if accept_new >= 0.0 || rng.gen::<f64>().ln() < accept_new {
            state = subtree.proposal.clone();
        }
        log_sum_weight = log_add_exp(log_sum_weight, subtree.log_sum_weight);
        if direction > 0.0 {
            rightmost = subtree.rightmost;
        } else {
            leftmost = subtree.leftmost;
        }
        for j in 0..rho.len() {
            rho[j] += subtree.rho[j];
        }
        if is_uturn(&rho, &leftmost, &rightmost, inv_mass) {
            saturated = false;
            break;
        }
    }

    let accept_prob = if n_leapfrog > 0 { sum_accept / n_leapfrog as f64 } else { 0.0 };
    Transition { state, accept_prob, divergent, depth_saturated: saturated }
}

/// Fixed-length HMC update with a Metropolis accept step (debugging fallback).
pub(super) fn fixed_hmc_transition<T: LogDensity>(
    target: &T,
    rng: &mut ChaCha8Rng,
    current: &State,
    step: f64,
    inv_mass: &[f64],
    steps: usize,
) -> Transition {
    let r = sample_momentum(rng, inv_mass);
    let start = State { q: current.q.clone(), r, grad: current.grad.clone(), logp: current.logp };
    let log_joint0 = start.log_joint(inv_mass);
    let mut state = start.clone();
    for _ in 0..steps.max(1) {
        state = leapfrog(target, &state, step, inv_mass);
    }
    let log_joint1 = state.log_joint(inv_mass);
    let log_ratio = if log_joint1.is_finite() { log_joint1 - log_joint0 } else { f64::NEG_INFINITY };
    let divergent = !(log_ratio > -DIVERGENCE_THRESHOLD);
    let accept_prob = log_ratio.min(0.0).exp();
    let accepted = !divergent && rng.gen::<f64>().ln() < log_ratio;
    Transition {
        state: if accepted { state } else { start },
        accept_prob,
        divergent,
        depth_saturated: false,
    }
}

/// Nesterov dual averaging of log step size toward a target acceptance rate.
pub(super) struct DualAverage {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: u64,
    target_accept: f64,
}

impl DualAverage {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        DualAverage {
            mu: (10.0 * initial_step).ln(),
            log_eps: initial_step.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            count: 0,
            target_accept,
        }
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.count += 1;
        let m = self.count as f64;
        let eta = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_prob);
        self.log_eps = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let w = m.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// The averaged step size, used after warmup ends.
    pub fn finalized(&self) -> f64 {
        if self.count == 0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

/// Doubles/halves the step size until one leapfrog step crosses 50%
/// acceptance (the usual cheap initialization heuristic).
pub(super) fn find_reasonable_step<T: LogDensity>(
    target: &T,
    rng: &mut ChaCha8Rng,
    state: &State,
    inv_mass: &[f64],
) -> f64 {
    let mut eps = 1.0;
    let r = sample_momentum(rng, inv_mass);
    let start = State { q: state.q.clone(), r, grad: state.grad.clone(), logp: state.logp };
    let joint0 = start.log_joint(inv_mass);

    let ratio_at = |eps: f64| -> f64 {
        let next = leapfrog(target, &start, eps, inv_mass);
        let joint1 = next.log_joint(inv_mass);
        if joint1.is_finite() {
            (joint1 - joint0).exp()
        } else {
            0.0
        }
    };

    let mut ratio = ratio_at(eps);
    let a: f64 = if ratio > 0.5 { 1.0 } else { -1.0 };
    for _ in 0..100 {
        if ratio.powf(a) <= 2.0f64.powf(-a) {
            break;
        }
        eps *= 2.0f64.powf(a);
        if !(1e-10..=1e10).contains(&eps) {
            break;
        }
        ratio = ratio_at(eps);
    }
    eps.clamp(1e-10, 1e10)
}

/// Stan-style warmup phases: a step-size-only opening buffer, doubling
/// variance-estimation windows, and a closing step-size-only buffer.
pub(super) struct WarmupSchedule {
    init: usize,
    limit: usize,
    window_ends: Vec<usize>,
}

impl WarmupSchedule {
    pub fn new(warmup: usize) -> Self {
        if warmup < 20 {
            return WarmupSchedule { init: warmup, limit: warmup, window_ends: Vec::new() };
        }
        let (init, term, base) = if warmup >= 150 {
            (75usize, 50usize, 25usize)
        } else {
            let init = (warmup as f64 * 0.15).ceil() as usize;
            let term = (warmup as f64 * 0.10).ceil() as usize;
            (init, term, warmup - init - term)
        };
        let limit = warmup - term;
        let mut window_ends = Vec::new();
        let mut start = init;
        let mut width = base.max(1);
        while start < limit {
            let mut end = start + width;
            if end + 2 * width > limit {
                end = limit;
            }
            window_ends.push(end);
            start = end;
            width *= 2;
        }
        WarmupSchedule { init, limit, window_ends }
    }

    /// Is iteration `it` (0-based) inside a variance-collection window?
    pub fn collecting(&self, it: usize) -> bool {
        it >= self.init && it < self.limit
    }

    /// Does a window close after iteration `it`?
    pub fn window_closes(&self, it: usize) -> bool {
        self.window_ends.contains(&(it + 1))
    }
}

/// Streaming mean/variance for mass-matrix windows.
pub(super) struct RunningVariance {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        RunningVariance { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for j in 0..x.len() {
            let delta = x[j] - self.mean[j];
            self.mean[j] += delta / n;
            self.m2[j] += delta * (x[j] - self.mean[j]);
        }
    }

    /// Shrinks the raw variance toward a small constant, as is conventional
    /// for warmup-window metric estimates.
    pub fn regularized(&self) -> Option<Vec<f64>> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        Some(
            self.m2
                .iter()
                .map(|&m2| {
                    let var = m2 / (n - 1.0);
                    (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                })
                .map(|v| v.max(1e-10))
                .collect(),
        )
    }

    pub fn reset(&mut self) {
        self.count = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }
}
