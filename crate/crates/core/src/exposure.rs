//! Piecewise-constant exposure `γ(t)` and its operational time
//! `ρ(t) = ∫₀ᵗ γ(x) dx`.

use crate::error::{Error, Result};

/// Right-continuous step function on `[0, horizon]`.
///
/// Piece `k` covers `[starts[k], starts[k+1])`; the last piece runs to the
/// horizon inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureStepFunction {
    starts: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
    /// `ρ(starts[k])`
    cumulative: Vec<f64>,
}

impl ExposureStepFunction {
    pub fn new(starts: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self> {
        if starts.is_empty() || starts.len() != values.len() {
            return Err(Error::InvalidExposure(format!(
                "{} start times for {} values",
                starts.len(),
                values.len()
            )));
        }
        if starts[0] != 0.0 {
            return Err(Error::InvalidExposure("first piece must start at 0".into()));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidExposure(format!("horizon {horizon}")));
        }
        for k in 1..starts.len() {
            if !(starts[k] > starts[k - 1]) {
                return Err(Error::UnsortedInput { index: k });
            }
            if starts[k] >= horizon {
                return Err(Error::OutOfHorizon { t: starts[k], horizon });
            }
        }
        if let Some(k) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidExposure(format!(
                "value {} of piece {k} is not strictly positive",
                values[k]
            )));
        }
        let mut cumulative = Vec::with_capacity(starts.len());
        let mut acc = 0.0;
        for k in 0..starts.len() {
            cumulative.push(acc);
            let end = starts.get(k + 1).copied().unwrap_or(horizon);
            acc += values[k] * (end - starts[k]);
        }
        Ok(ExposureStepFunction { starts, values, horizon, cumulative })
    }

    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![value], horizon)
    }

    /// Cycles through `levels`, switching every `period` time units.
    pub fn cycling(levels: &[f64], period: f64, horizon: f64) -> Result<Self> {
        if levels.is_empty() || !(period > 0.0) {
            return Err(Error::InvalidExposure("cycling needs levels and a positive period".into()));
        }
        let mut starts = Vec::new();
        let mut values = Vec::new();
        let mut k = 0usize;
        loop {
            let s = k as f64 * period;
            if k > 0 && s >= horizon {
                break;
            }
            starts.push(s);
            values.push(levels[k % levels.len()]);
            k += 1;
        }
        Self::new(starts, values, horizon)
    }

    /// Approximates a densely sampled exposure series by steps of width
    /// `resolution`: each step takes the mean of the samples falling in it,
    /// or carries the previous value forward when a step holds no sample.
    pub fn from_samples(times: &[f64], samples: &[f64], horizon: f64, resolution: f64) -> Result<Self> {
        if times.len() != samples.len() || times.is_empty() {
            return Err(Error::LengthMismatch { left: times.len(), right: samples.len() });
        }
        if !(resolution > 0.0) {
            return Err(Error::InvalidExposure("resolution must be positive".into()));
        }
        let bins = ((horizon / resolution).ceil() as usize).max(1);
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for (&t, &v) in times.iter().zip(samples) {
            if !(0.0..=horizon).contains(&t) {
                return Err(Error::OutOfHorizon { t, horizon });
            }
            let b = ((t / resolution) as usize).min(bins - 1);
            sums[b] += v;
            counts[b] += 1;
        }
        let mut last = samples[0];
        let mut values = Vec::with_capacity(bins);
        for b in 0..bins {
            if counts[b] > 0 {
                last = sums[b] / counts[b] as f64;
            }
            values.push(last);
        }
        let starts = (0..bins).map(|b| b as f64 * resolution).collect();
        Self::new(starts, values, horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Start times of all pieces but the first.
    pub fn interior_breakpoints(&self) -> &[f64] {
        &self.starts[1..]
    }

    /// `(start, end, value)` for each piece.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.starts.len()).map(move |k| {
            let end = self.starts.get(k + 1).copied().unwrap_or(self.horizon);
            (self.starts[k], end, self.values[k])
        })
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfHorizon { t, horizon: self.horizon });
        }
        Ok(())
    }

    fn piece_index(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// `γ(t)`, right-continuous at breakpoints.
    pub fn exposure_at(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.values[self.piece_index(t)])
    }

    /// `ρ(t)`
    pub fn operational_time(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let k = self.piece_index(t);
        Ok(self.cumulative[k] + self.values[k] * (t - self.starts[k]))
    }

    /// `ρ(T)`
    pub fn total_operational_time(&self) -> f64 {
        let k = self.starts.len() - 1;
        self.cumulative[k] + self.values[k] * (self.horizon - self.starts[k])
    }

    /// `ρ⁻¹(s)` for `0 ≤ s ≤ ρ(T)`.
    pub fn inverse_operational_time(&self, s: f64) -> Result<f64> {
        let total = self.total_operational_time();
        if !(0.0..=total).contains(&s) {
            return Err(Error::OutOfHorizon { t: s, horizon: total });
        }
        let k = self.cumulative.partition_point(|&c| c <= s).saturating_sub(1);
        let t = self.starts[k] + (s - self.cumulative[k]) / self.values[k];
        Ok(t.min(self.horizon))
    }

    /// Same step function multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.starts.clone(),
            self.values.iter().map(|v| v * factor).collect(),
            self.horizon,
        )
    }
}
