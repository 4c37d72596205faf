//! Exact simulation of the hidden chain and of modulated arrivals.
//!
//! Randomness comes from ChaCha20 seeded with the 64-bit run seed. The
//! regime path is drawn from stream [`PATH_STREAM`] and the arrivals from
//! stream [`ARRIVAL_STREAM`] of the same seed, so changing the arrival
//! intensities never perturbs the simulated path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::exposure::ExposureStepFunction;
use crate::model::{ModelParams, RegimePath};

pub const PATH_STREAM: u64 = 0;
pub const ARRIVAL_STREAM: u64 = 1;

/// Offset applied to an arrival that would otherwise coincide with its
/// predecessor.
pub const TIE_JITTER: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub params: ModelParams,
    pub gamma: ExposureStepFunction,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn horizon(&self) -> f64 {
        self.gamma.horizon()
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub claims: Vec<f64>,
    pub path: RegimePath,
    /// Number of arrivals moved by [`TIE_JITTER`].
    pub jittered: usize,
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draws a path of the hidden chain on `[0, horizon]` using `rng`.
pub fn sample_ctmc<R: Rng + ?Sized>(params: &ModelParams, horizon: f64, rng: &mut R) -> Result<RegimePath> {
    let q = params.generator();
    let r = params.order();
    let mut state = draw_index(rng, params.pi());
    let mut jump_times = vec![0.0];
    let mut states = vec![state];
    let mut t = 0.0;
    loop {
        let rate = -q[(state, state)];
        if rate <= 0.0 {
            break;
        }
        let hold = Exp::new(rate).map_err(|_| Error::NonFinite("holding rate"))?.sample(rng);
        t += hold;
        if t >= horizon {
            break;
        }
        let weights: Vec<f64> = (0..r).map(|j| if j == state { 0.0 } else { q[(state, j)] }).collect();
        state = draw_index(rng, &weights);
        jump_times.push(t);
        states.push(state);
    }
    RegimePath::new(jump_times, states, horizon)
}

/// Path of the hidden chain for a seeded run.
pub fn simulate_ctmc(params: &ModelParams, horizon: f64, seed: u64) -> Result<RegimePath> {
    sample_ctmc(params, horizon, &mut stream_rng(seed, PATH_STREAM))
}

/// Arrivals conditional on `path`: on every stretch where both regime and
/// exposure are constant the process is homogeneous Poisson with rate
/// `λ_s·γ`. Gaps are drawn as unit-rate exponentials in operational time
/// and mapped back through the (locally linear) inverse.
pub fn sample_arrivals<R: Rng + ?Sized>(
    path: &RegimePath,
    lambda: &[f64],
    gamma: &ExposureStepFunction,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    let horizon = gamma.horizon();
    let mut cuts: Vec<f64> = path.jump_times().to_vec();
    cuts.extend_from_slice(gamma.starts());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let unit = Exp::new(1.0).expect("unit rate");
    let mut claims = Vec::new();
    let mut jittered = 0;
    for (k, &a) in cuts.iter().enumerate() {
        let b = cuts.get(k + 1).copied().unwrap_or(horizon);
        if b <= a {
            continue;
        }
        let state = path.state_at(a);
        let g = gamma.exposure_at(a)?;
        let rate = lambda[state];
        // operational clock within the stretch, in units of ρ
        let span = g * (b - a);
        let mut s = 0.0;
        loop {
            s += unit.sample(rng) / rate;
            if s >= span {
                break;
            }
            let mut t = a + s / g;
            if let Some(&prev) = claims.last() {
                if t <= prev {
                    t = prev + TIE_JITTER;
                    jittered += 1;
                    log::debug!("jittered coincident arrival at {prev}");
                }
            }
            if t < b {
                claims.push(t);
            }
        }
    }
    Ok((claims, jittered))
}

/// Simulates a path and its arrivals from independent streams of the seed.
pub fn simulate_mmnpp(config: &SimulationConfig) -> Result<SimulationOutput> {
    let path = simulate_ctmc(&config.params, config.horizon(), config.seed)?;
    let mut rng = stream_rng(config.seed, ARRIVAL_STREAM);
    let (claims, jittered) = sample_arrivals(&path, config.params.lambda(), &config.gamma, &mut rng)?;
    if jittered > 0 {
        log::warn!("{jittered} coincident arrival times were separated by {TIE_JITTER}");
    }
    Ok(SimulationOutput { claims, path, jittered })
}

/// Sorted merge of two arrival streams.
pub fn superpose(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
