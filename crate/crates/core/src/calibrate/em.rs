use serde::{Deserialize, Serialize};

use super::estep::{e_step_recursion, EStepEstimators};
use super::kernels::kernel_steps;
use super::recursion::{forward_backward_steps, RecursionState};
use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::exposure::ExposureStepFunction;
use crate::matexp::SquareMatrix;
use crate::model::ModelParams;

/// A state whose expected time falls below this fraction of the horizon is
/// frozen for the iteration.
pub const STARVED_FRACTION: f64 = 1e-8;

/// Off-diagonal mass of the default initial generator, per row.
pub const INITIAL_MIXING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop when successive log-likelihoods differ by less than `tol`.
    LogLikelihood,
    /// Stop when no generator entry or intensity moves by more than `tol`.
    Parameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub stop: StopRule,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-4, max_iter: 500, stop: StopRule::LogLikelihood }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarvedPolicy {
    /// Keep the previous row of `Q` and `λ_i` for a starved state.
    Freeze,
    /// Fail with [`Error::EmptyState`].
    Strict,
}

#[derive(Debug, Clone)]
pub struct MStep {
    pub params: ModelParams,
    pub starved: Vec<usize>,
}

/// `q̂_ij = â_ij / T̂_i`, `λ̂_i = n̂_i / T̂*_i`; `π` is carried over from
/// `current`.
pub fn m_step(est: &EStepEstimators, current: &ModelParams, horizon: f64, policy: StarvedPolicy) -> Result<MStep> {
    let r = current.order();
    let floor = STARVED_FRACTION * horizon;
    let mut q = SquareMatrix::zeros(r);
    let mut lambda = current.lambda().to_vec();
    let mut starved = Vec::new();
    for i in 0..r {
        let lam = est.n_hat[i] / est.t_star_hat[i];
        let usable = est.t_hat[i] >= floor && est.t_star_hat[i] > 0.0 && lam > 0.0 && lam.is_finite();
        if !usable {
            if policy == StarvedPolicy::Strict {
                return Err(Error::EmptyState { state: i });
            }
            log::warn!("state {i} is starved (expected time {:.3e}); freezing its parameters", est.t_hat[i]);
            starved.push(i);
            for j in 0..r {
                q[(i, j)] = current.generator()[(i, j)];
            }
            continue;
        }
        let mut off = 0.0;
        for j in 0..r {
            if i != j {
                let v = est.a_hat[(i, j)].max(0.0) / est.t_hat[i];
                q[(i, j)] = v;
                off += v;
            }
        }
        q[(i, i)] = -off;
        lambda[i] = lam;
    }
    let params = ModelParams::new(q, lambda, current.pi().to_vec())?;
    Ok(MStep { params, starved })
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    /// Log-likelihood of the initial parameters followed by one entry per
    /// EM iteration.
    pub loglik: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub recursion: RecursionState,
    /// Estimators evaluated at the final parameters.
    pub estimators: EStepEstimators,
    /// Iterations in which some state had to be frozen.
    pub starved_iterations: usize,
}

impl FitResult {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik.last().expect("trace holds the initial value")
    }
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Default starting point for EM.
///
/// Claims are binned into windows of roughly twenty expected claims each;
/// `λ⁰_i` is the `(2i−1)/2r` quantile of the exposure-adjusted window
/// rates, `Q⁰` mixes uniformly with total rate [`INITIAL_MIXING`] and `π⁰`
/// is uniform.
pub fn initial_params(events: &EventSequence, gamma: &ExposureStepFunction, order: usize) -> Result<ModelParams> {
    let n = events.claim_count();
    if order == 0 || n < order {
        return Err(Error::NonIdentifiable { n, order });
    }
    let horizon = gamma.horizon();
    let total_rho = gamma.total_operational_time();
    if !(total_rho > 0.0) {
        return Err(Error::NonIdentifiable { n, order });
    }
    let overall = n as f64 / total_rho;
    if order == 1 {
        return ModelParams::poisson(overall);
    }
    let windows = (n / 20).clamp(order, 10_000);
    let width = horizon / windows as f64;
    let mut counts = vec![0usize; windows];
    for t in events.claim_times() {
        counts[((t / width) as usize).min(windows - 1)] += 1;
    }
    let mut rates = Vec::with_capacity(windows);
    for (w, &c) in counts.iter().enumerate() {
        let a = gamma.operational_time(w as f64 * width)?;
        let b = gamma.operational_time(((w + 1) as f64 * width).min(horizon))?;
        rates.push(c as f64 / (b - a));
    }
    rates.sort_by(f64::total_cmp);
    let mut lambda: Vec<f64> = (1..=order)
        .map(|i| quantile(&rates, (2 * i - 1) as f64 / (2 * order) as f64))
        .collect();
    let floor = 1e-3 * overall;
    for i in 0..order {
        lambda[i] = lambda[i].max(floor);
        if i > 0 && lambda[i] <= lambda[i - 1] {
            // break exact ties so the states can separate
            lambda[i] = lambda[i - 1] * (1.0 + 1e-3);
        }
    }
    let off = INITIAL_MIXING / (order - 1) as f64;
    let mut q = SquareMatrix::zeros(order);
    for i in 0..order {
        for j in 0..order {
            q[(i, j)] = if i == j { -INITIAL_MIXING } else { off };
        }
    }
    ModelParams::new(q, lambda, vec![1.0 / order as f64; order])
}

/// Runs EM from `init` (or [`initial_params`]) until the stop rule fires or
/// `max_iter` iterations have been taken.
pub fn fit(
    events: &EventSequence,
    gamma: &ExposureStepFunction,
    order: usize,
    init: Option<&ModelParams>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = events.claim_count();
    if order == 0 || n < order {
        return Err(Error::NonIdentifiable { n, order });
    }
    let mut params = match init {
        Some(p) if p.order() != order => {
            return Err(Error::DimensionMismatch(format!(
                "initial model has order {} but {order} was requested",
                p.order()
            )))
        }
        Some(p) => p.clone(),
        None => initial_params(events, gamma, order)?,
    };
    let steps = kernel_steps(events)?;
    let horizon = events.horizon();
    let mut rec = forward_backward_steps(&params, steps.clone())?;
    let mut loglik = vec![rec.log_likelihood()];
    let mut converged = false;
    let mut iterations = 0;
    let mut starved_iterations = 0;
    while iterations < opts.max_iter {
        let est = e_step_recursion(&params, &rec)?;
        let next = m_step(&est, &params, horizon, StarvedPolicy::Freeze)?;
        if !next.starved.is_empty() {
            starved_iterations += 1;
        }
        let next_rec = forward_backward_steps(&next.params, steps.clone())?;
        let ll = next_rec.log_likelihood();
        let change = match opts.stop {
            StopRule::LogLikelihood => (ll - loglik[loglik.len() - 1]).abs(),
            StopRule::Parameters => next.params.max_abs_diff(&params),
        };
        log::debug!("EM iteration {}: loglik {ll:.6}", iterations + 1);
        loglik.push(ll);
        params = next.params;
        rec = next_rec;
        iterations += 1;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let estimators = e_step_recursion(&params, &rec)?;
    Ok(FitResult { params, loglik, iterations, converged, recursion: rec, estimators, starved_iterations })
}
