//! Regime inference from a fitted model.

use serde::{Deserialize, Serialize};

use crate::calibrate::{partial_occupancy, survival_generator, RecursionState, StepKind};
use crate::error::{Error, Result};
use crate::exposure::ExposureStepFunction;
use crate::matexp::{expm, SquareMatrix};
use crate::model::ModelParams;

/// Per-step regime probabilities, one vector per recursion step.
#[derive(Debug, Clone)]
pub struct StateProbabilitySeries {
    pub times: Vec<f64>,
    pub kinds: Vec<StepKind>,
    pub probs: Vec<Vec<f64>>,
}

impl StateProbabilitySeries {
    /// Rows belonging to claims only.
    pub fn claims(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times
            .iter()
            .zip(&self.kinds)
            .zip(&self.probs)
            .filter(|((_, k), _)| k.is_claim())
            .map(|((t, _), p)| (*t, p.as_slice()))
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        if *x < 0.0 && *x >= -1e-12 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Filtered probabilities `L(k)`.
pub fn filtered_probs(recursion: &RecursionState) -> StateProbabilitySeries {
    let steps = recursion.steps();
    StateProbabilitySeries {
        times: steps.iter().map(|s| s.time).collect(),
        kinds: steps.iter().map(|s| s.kind).collect(),
        probs: (1..=recursion.len()).map(|k| recursion.forward(k).to_vec()).collect(),
    }
}

/// Smoothed probabilities `∝ L(k) ⊙ R(k+1)`.
pub fn smoothed_probs(recursion: &RecursionState) -> StateProbabilitySeries {
    let steps = recursion.steps();
    let probs = (1..=recursion.len())
        .map(|k| {
            let v = recursion
                .forward(k)
                .iter()
                .zip(recursion.backward(k + 1))
                .map(|(l, r)| l * r)
                .collect();
            normalized(v)
        })
        .collect();
    StateProbabilitySeries {
        times: steps.iter().map(|s| s.time).collect(),
        kinds: steps.iter().map(|s| s.kind).collect(),
        probs,
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn most_likely_state(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Most likely regime (0-based) for every row of the series.
pub fn most_likely_regimes(series: &StateProbabilitySeries) -> Vec<usize> {
    series.probs.iter().map(|p| most_likely_state(p)).collect()
}

/// Window boundaries partitioning `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrid {
    bounds: Vec<f64>,
}

impl WindowGrid {
    pub fn new(bounds: Vec<f64>) -> Result<Self> {
        if bounds.len() < 2 {
            return Err(Error::SeriesTooShort { len: bounds.len(), needed: 1 });
        }
        if let Some(k) = (1..bounds.len()).find(|&k| !(bounds[k] > bounds[k - 1])) {
            return Err(Error::UnsortedInput { index: k });
        }
        Ok(WindowGrid { bounds })
    }

    /// Windows of width `width` from 0; the last one is cut at the horizon.
    pub fn uniform(horizon: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !(horizon > 0.0) {
            return Err(Error::GridOutsideHorizon { horizon });
        }
        let full = (horizon / width).floor() as usize;
        let mut bounds: Vec<f64> = (0..=full).map(|k| k as f64 * width).collect();
        if horizon - bounds[full] > 1e-9 * width {
            bounds.push(horizon);
        } else {
            bounds[full] = horizon;
        }
        Self::new(bounds)
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn starts(&self) -> &[f64] {
        &self.bounds[..self.bounds.len() - 1]
    }

    fn check(&self, horizon: f64) -> Result<()> {
        let first = self.bounds[0];
        let last = self.bounds[self.bounds.len() - 1];
        if first != 0.0 || (last - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::GridOutsideHorizon { horizon });
        }
        Ok(())
    }

    /// Claims falling in each window; the last window is closed on the right.
    pub fn observed_counts(&self, claims: &[f64]) -> Vec<f64> {
        let mut counts = vec![0.0; self.len()];
        for &t in claims {
            let w = self.bounds.partition_point(|&b| b <= t).saturating_sub(1).min(self.len() - 1);
            counts[w] += 1.0;
        }
        counts
    }
}

/// Posterior expected claim count in each window,
/// `Σ_i λ_i ∫_w P[M(s) = i | data] γ(s) ds`.
///
/// Interval posteriors are integrated exactly from the recursion, splitting
/// inter-event intervals at window boundaries; the window totals therefore
/// sum to `Σ_i λ_i T̂*_i`.
pub fn expected_counts(
    params: &ModelParams,
    recursion: &RecursionState,
    gamma: &ExposureStepFunction,
    grid: &WindowGrid,
) -> Result<Vec<f64>> {
    grid.check(gamma.horizon())?;
    let bounds = grid.bounds();
    let mut out = vec![0.0; grid.len()];
    let lambda = params.lambda();
    let mut start = 0.0;
    for (idx, step) in recursion.steps().iter().enumerate() {
        let end = step.time;
        if step.dt > 0.0 {
            // first window containing `start`
            let mut w = bounds.partition_point(|&b| b <= start).saturating_sub(1).min(grid.len() - 1);
            loop {
                let lo = start.max(bounds[w]);
                let hi = if w + 1 == grid.len() { end } else { end.min(bounds[w + 1]) };
                if hi > lo {
                    let occ = partial_occupancy(params, recursion, idx + 1, lo - start, hi - start)?;
                    out[w] += step.gamma * occ.iter().zip(lambda).map(|(o, l)| o * l).sum::<f64>();
                }
                if w + 1 >= grid.len() || bounds[w + 1] >= end {
                    break;
                }
                w += 1;
            }
        }
        start = end;
    }
    Ok(out)
}

/// One-step-ahead predictions `E[N_w | claims before w]`: the filtered
/// distribution at the window start is propagated through the window with
/// the regime chain left unconditioned.
pub fn predicted_counts(
    params: &ModelParams,
    recursion: &RecursionState,
    gamma: &ExposureStepFunction,
    grid: &WindowGrid,
) -> Result<Vec<f64>> {
    grid.check(gamma.horizon())?;
    let steps = recursion.steps();
    let bounds = grid.bounds();
    let lambda = params.lambda();
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    for w in 0..grid.len() {
        let (a, b) = (bounds[w], bounds[w + 1]);
        while k < steps.len() && steps[k].time < a {
            k += 1;
        }
        let t_k = if k == 0 { 0.0 } else { steps[k - 1].time };
        let mut p = recursion.forward(k).to_vec();
        if k < steps.len() && a > t_k {
            let fbar = expm(&survival_generator(params, steps[k].gamma).scale(a - t_k))?;
            p = normalized(fbar.left_mul_vec(&p));
        }
        let mut total = 0.0;
        let mut s = a;
        let mut j = k;
        while j < steps.len() && s < b {
            let g = steps[j].gamma;
            while j + 1 < steps.len() && steps[j].time < b && steps[j + 1].gamma == g {
                j += 1;
            }
            let end = steps[j].time.min(b);
            if end > s {
                let (e, integral) = occupancy_block(params.generator(), end - s)?;
                let occ = integral.left_mul_vec(&p);
                total += g * occ.iter().zip(lambda).map(|(o, l)| o * l).sum::<f64>();
                p = e.left_mul_vec(&p);
            }
            s = end;
            j += 1;
        }
        out.push(total);
    }
    Ok(out)
}

/// `(e^{Qh}, ∫₀^h e^{Qu} du)` from one exponential of `[[Q, I], [0, 0]]·h`.
fn occupancy_block(q: &SquareMatrix, h: f64) -> Result<(SquareMatrix, SquareMatrix)> {
    let r = q.dim();
    let mut m = SquareMatrix::zeros(2 * r);
    for i in 0..r {
        for j in 0..r {
            m[(i, j)] = q[(i, j)] * h;
        }
        m[(i, r + i)] = h;
    }
    let full = expm(&m)?;
    Ok((full.block(0, 0, r), full.block(0, r, r)))
}

/// Information a window's expected count is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualBasis {
    /// Claims before the window start ([`predicted_counts`]).
    #[default]
    Predictive,
    /// The whole sample ([`expected_counts`]).
    Smoothed,
}

pub fn window_expectations(
    params: &ModelParams,
    recursion: &RecursionState,
    gamma: &ExposureStepFunction,
    grid: &WindowGrid,
    basis: ResidualBasis,
) -> Result<Vec<f64>> {
    match basis {
        ResidualBasis::Predictive => predicted_counts(params, recursion, gamma, grid),
        ResidualBasis::Smoothed => expected_counts(params, recursion, gamma, grid),
    }
}

/// `observed − expected` per window.
pub fn residuals(observed: &[f64], expected: &[f64]) -> Vec<f64> {
    observed.iter().zip(expected).map(|(o, e)| o - e).collect()
}
