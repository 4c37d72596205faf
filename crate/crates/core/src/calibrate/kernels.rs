use crate::error::{Error, Result};
use crate::events::{EventKind, EventSequence};
use crate::matexp::{expm, SquareMatrix};
use crate::model::ModelParams;

/// What closes an inter-event interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Claim,
    ExposureChange,
    /// End of observation; survival only, like an exposure change.
    Horizon,
}

impl StepKind {
    pub fn is_claim(self) -> bool {
        self == StepKind::Claim
    }
}

impl From<EventKind> for StepKind {
    fn from(k: EventKind) -> Self {
        match k {
            EventKind::Claim => StepKind::Claim,
            EventKind::ExposureChange => StepKind::ExposureChange,
        }
    }
}

/// One interval `(t_{k-1}, t_k]` of the recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelStep {
    /// `t_k`
    pub time: f64,
    /// `t_k − t_{k-1}`
    pub dt: f64,
    /// Exposure on the open interval.
    pub gamma: f64,
    /// Exposure in force at `t_k`, used by the jump factor of a claim.
    pub gamma_event: f64,
    pub kind: StepKind,
}

/// Turns the merged stream into recursion steps, appending a survival-only
/// step from the last entry to the horizon when that stretch is non-empty.
///
/// Two claims at the same instant are rejected; a claim coinciding with a
/// breakpoint yields a zero-length step, whose survival kernel is the
/// identity.
pub fn kernel_steps(events: &EventSequence) -> Result<Vec<KernelStep>> {
    let times = events.times();
    let kinds = events.kinds();
    let mut steps = Vec::with_capacity(times.len() + 1);
    let mut prev = 0.0;
    for k in 0..times.len() {
        let dt = times[k] - prev;
        if dt < 0.0 || (dt == 0.0 && k > 0 && kinds[k] == EventKind::Claim && kinds[k - 1] == EventKind::Claim) {
            return Err(Error::UnsortedInput { index: k });
        }
        steps.push(KernelStep {
            time: times[k],
            dt,
            gamma: events.gamma_before()[k],
            gamma_event: events.gamma_after()[k],
            kind: kinds[k].into(),
        });
        prev = times[k];
    }
    let horizon = events.horizon();
    if horizon > prev {
        let g = events.final_gamma();
        steps.push(KernelStep {
            time: horizon,
            dt: horizon - prev,
            gamma: g,
            gamma_event: g,
            kind: StepKind::Horizon,
        });
    }
    Ok(steps)
}

/// `Q − Λγ`
pub fn survival_generator(params: &ModelParams, gamma: f64) -> SquareMatrix {
    let mut a = params.generator().clone();
    for (i, &l) in params.lambda().iter().enumerate() {
        a[(i, i)] -= l * gamma;
    }
    a
}

#[derive(Debug, Clone)]
pub struct TransitionKernels {
    /// `exp[(Q − Λγ)Δ]`: regime transitions with no arrival.
    pub fbar: SquareMatrix,
    /// `fbar·Λγ_event` for a claim, `fbar` otherwise.
    pub f: SquareMatrix,
}

pub fn interval_kernels(
    params: &ModelParams,
    gamma_before: f64,
    gamma_at_event: f64,
    dt: f64,
    kind: StepKind,
) -> Result<TransitionKernels> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::NonFinite("interval length"));
    }
    let fbar = if dt == 0.0 {
        SquareMatrix::identity(params.order())
    } else {
        expm(&survival_generator(params, gamma_before).scale(dt))?
    };
    let f = if kind.is_claim() {
        let jump: Vec<f64> = params.lambda().iter().map(|l| l * gamma_at_event).collect();
        fbar.scale_cols(&jump)
    } else {
        fbar.clone()
    };
    Ok(TransitionKernels { fbar, f })
}

impl KernelStep {
    pub fn kernels(&self, params: &ModelParams) -> Result<TransitionKernels> {
        interval_kernels(params, self.gamma, self.gamma_event, self.dt, self.kind)
    }
}
