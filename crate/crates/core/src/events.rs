use crate::error::{Error, Result};
use crate::exposure::ExposureStepFunction;

/// Kind of an entry in the merged event stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// The exposure function changes value (flag 0).
    ExposureChange,
    /// An event of interest, e.g. a claim (flag 1).
    Claim,
}

impl EventKind {
    pub fn flag(self) -> u8 {
        match self {
            EventKind::ExposureChange => 0,
            EventKind::Claim => 1,
        }
    }
}

/// Claims merged with exposure breakpoints in chronological order.
///
/// `gamma_before[k]` is the exposure on the open interval ending at entry
/// `k`; `gamma_after[k]` is the exposure in force from entry `k` onwards.
/// At a tie a breakpoint precedes the claim, so the claim sees the new
/// exposure on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    times: Vec<f64>,
    kinds: Vec<EventKind>,
    gamma_before: Vec<f64>,
    gamma_after: Vec<f64>,
    horizon: f64,
    initial_gamma: f64,
}

impl EventSequence {
    /// Merges sorted claim times with the interior breakpoints of `gamma`.
    pub fn build(claim_times: &[f64], gamma: &ExposureStepFunction) -> Result<Self> {
        let horizon = gamma.horizon();
        for (i, &t) in claim_times.iter().enumerate() {
            if !(0.0..=horizon).contains(&t) {
                return Err(Error::OutOfHorizon { t, horizon });
            }
            if i > 0 && t < claim_times[i - 1] {
                return Err(Error::UnsortedInput { index: i });
            }
        }
        let breaks = gamma.interior_breakpoints();
        let total = claim_times.len() + breaks.len();
        let mut times = Vec::with_capacity(total);
        let mut kinds = Vec::with_capacity(total);
        let (mut i, mut j) = (0, 0);
        while i < claim_times.len() || j < breaks.len() {
            let take_break = j < breaks.len() && (i == claim_times.len() || breaks[j] <= claim_times[i]);
            if take_break {
                times.push(breaks[j]);
                kinds.push(EventKind::ExposureChange);
                j += 1;
            } else {
                times.push(claim_times[i]);
                kinds.push(EventKind::Claim);
                i += 1;
            }
        }
        let initial_gamma = gamma.values()[0];
        let mut gamma_before = Vec::with_capacity(total);
        let mut gamma_after = Vec::with_capacity(total);
        let mut current = initial_gamma;
        for &t in &times {
            gamma_before.push(current);
            current = gamma.exposure_at(t)?;
            gamma_after.push(current);
        }
        Ok(EventSequence { times, kinds, gamma_before, gamma_after, horizon, initial_gamma })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kinds(&self) -> &[EventKind] {
        &self.kinds
    }

    pub fn flags(&self) -> Vec<u8> {
        self.kinds.iter().map(|k| k.flag()).collect()
    }

    pub fn gamma_before(&self) -> &[f64] {
        &self.gamma_before
    }

    pub fn gamma_after(&self) -> &[f64] {
        &self.gamma_after
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Exposure in force at time zero.
    pub fn initial_gamma(&self) -> f64 {
        self.initial_gamma
    }

    /// Exposure on the stretch after the last entry.
    pub fn final_gamma(&self) -> f64 {
        self.gamma_after.last().copied().unwrap_or(self.initial_gamma)
    }

    pub fn claim_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k == EventKind::Claim).count()
    }

    pub fn claim_times(&self) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == EventKind::Claim)
            .map(|(t, _)| *t)
            .collect()
    }
}
