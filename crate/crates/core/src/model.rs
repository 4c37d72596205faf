use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matexp::SquareMatrix;

/// Row-sum / probability deviations below this are absorbed by renormalizing.
pub const NORMALIZE_TOLERANCE: f64 = 1e-9;

/// Parameters of an order-r Markov-modulated Poisson process.
///
/// `q` is the generator of the hidden chain (rows sum to zero), `lambda`
/// the baseline event intensity of each regime at unit exposure and `pi`
/// the distribution of the regime at time zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    q: SquareMatrix,
    lambda: Vec<f64>,
    pi: Vec<f64>,
}

impl ModelParams {
    /// Validates raw inputs. Rows of `q` and the vector `pi` that miss their
    /// target sum by less than [`NORMALIZE_TOLERANCE`] are repaired (the
    /// diagonal is reset to minus the off-diagonal sum, `pi` is rescaled);
    /// larger deviations are rejected.
    pub fn new(q: SquareMatrix, lambda: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        let r = q.dim();
        if r == 0 {
            return Err(Error::DimensionMismatch("order must be at least 1".into()));
        }
        if lambda.len() != r || pi.len() != r {
            return Err(Error::DimensionMismatch(format!(
                "generator is {r}x{r} but lambda has {} and pi has {} entries",
                lambda.len(),
                pi.len()
            )));
        }
        if !q.is_finite() {
            return Err(Error::NonFinite("generator"));
        }
        let mut q = q;
        for i in 0..r {
            let mut off = 0.0;
            for j in 0..r {
                if i != j {
                    let v = q[(i, j)];
                    if v < 0.0 {
                        return Err(Error::NegativeOffDiagonal { row: i, col: j, value: v });
                    }
                    off += v;
                }
            }
            let sum = off + q[(i, i)];
            if q[(i, i)] > 0.0 || sum.abs() >= NORMALIZE_TOLERANCE {
                return Err(Error::RowSumViolation { row: i, sum });
            }
            q[(i, i)] = -off;
        }
        for (index, &value) in lambda.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveIntensity { index, value });
            }
        }
        if pi.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::BadProbabilityVector("negative or non-finite entry".into()));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() >= NORMALIZE_TOLERANCE {
            return Err(Error::BadProbabilityVector(format!("entries sum to {total}")));
        }
        let pi = pi.into_iter().map(|p| p / total).collect();
        Ok(ModelParams { q, lambda, pi })
    }

    pub fn from_rows(q: &[Vec<f64>], lambda: &[f64], pi: &[f64]) -> Result<Self> {
        Self::new(SquareMatrix::from_rows(q)?, lambda.to_vec(), pi.to_vec())
    }

    /// Single-regime model: a Poisson process with intensity `lambda`.
    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(SquareMatrix::zeros(1), vec![lambda], vec![1.0])
    }

    pub fn order(&self) -> usize {
        self.lambda.len()
    }

    pub fn generator(&self) -> &SquareMatrix {
        &self.q
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Total departure rate `q_i = −q_ii` of each regime.
    pub fn exit_rates(&self) -> Vec<f64> {
        (0..self.order()).map(|i| -self.q[(i, i)]).collect()
    }

    /// Relabels states: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let r = self.order();
        if perm.len() != r {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let mut q = SquareMatrix::zeros(r);
        for i in 0..r {
            for j in 0..r {
                q[(i, j)] = self.q[(perm[i], perm[j])];
            }
        }
        Ok(ModelParams {
            q,
            lambda: perm.iter().map(|&k| self.lambda[k]).collect(),
            pi: perm.iter().map(|&k| self.pi[k]).collect(),
        })
    }

    pub fn with_lambda(&self, lambda: Vec<f64>) -> Result<Self> {
        Self::new(self.q.clone(), lambda, self.pi.clone())
    }

    /// Largest absolute change in any generator entry or intensity.
    pub fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        let dq = self.q.max_abs_diff(&other.q);
        let dl = self
            .lambda
            .iter()
            .zip(&other.lambda)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        dq.max(dl)
    }
}

/// On-disk JSON form: `{"order": r, "Q": [[...]], "lambda": [...], "pi": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub order: usize,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub pi: Vec<f64>,
}

impl From<&ModelParams> for ModelFile {
    fn from(p: &ModelParams) -> Self {
        ModelFile {
            order: p.order(),
            q: p.q.to_rows(),
            lambda: p.lambda.clone(),
            pi: p.pi.clone(),
        }
    }
}

impl TryFrom<ModelFile> for ModelParams {
    type Error = Error;
    fn try_from(f: ModelFile) -> Result<Self> {
        if f.q.len() != f.order {
            return Err(Error::DimensionMismatch(format!(
                "order {} but Q has {} rows",
                f.order,
                f.q.len()
            )));
        }
        ModelParams::from_rows(&f.q, &f.lambda, &f.pi)
    }
}

/// A realised path of the hidden chain: state `states[k]` holds on
/// `[jump_times[k], jump_times[k+1])`, the last one up to the horizon.
/// States are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    jump_times: Vec<f64>,
    states: Vec<usize>,
    horizon: f64,
}

impl RegimePath {
    pub fn new(jump_times: Vec<f64>, states: Vec<usize>, horizon: f64) -> Result<Self> {
        if jump_times.len() != states.len() || jump_times.is_empty() {
            return Err(Error::LengthMismatch { left: jump_times.len(), right: states.len() });
        }
        if jump_times[0] != 0.0 {
            return Err(Error::InvalidExposure("regime path must start at 0".into()));
        }
        for k in 1..jump_times.len() {
            if !(jump_times[k] > jump_times[k - 1]) {
                return Err(Error::UnsortedInput { index: k });
            }
            if states[k] == states[k - 1] {
                return Err(Error::DimensionMismatch(format!(
                    "consecutive intervals {} and {k} share state {}",
                    k - 1,
                    states[k]
                )));
            }
        }
        if let Some(&last) = jump_times.last() {
            if last > horizon {
                return Err(Error::OutOfHorizon { t: last, horizon });
            }
        }
        Ok(RegimePath { jump_times, states, horizon })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of regime changes.
    pub fn changes(&self) -> usize {
        self.states.len() - 1
    }

    /// `(start, end, state)` for each constant-regime interval.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.states.len()).map(move |k| {
            let end = self.jump_times.get(k + 1).copied().unwrap_or(self.horizon);
            (self.jump_times[k], end, self.states[k])
        })
    }

    /// State in force at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.jump_times.partition_point(|&u| u <= t);
        self.states[idx.saturating_sub(1)]
    }

    /// Time spent in each state over `[0, horizon]`.
    pub fn occupancy(&self, order: usize) -> Vec<f64> {
        let mut occ = vec![0.0; order];
        for (a, b, s) in self.intervals() {
            occ[s] += b - a;
        }
        occ
    }
}
