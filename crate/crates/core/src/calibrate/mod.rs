//! EM calibration of the hidden-regime component.
//!
//! Each iteration runs the scaled forward/backward recursion over the
//! merged claim/breakpoint stream, evaluates the closed-form E-step
//! estimators through Van Loan block exponentials, and updates `Q` and `λ`
//! by their complete-data maximum likelihood ratios.

mod em;
mod estep;
mod kernels;
mod recursion;

pub use em::{
    fit, initial_params, m_step, FitOptions, FitResult, MStep, StarvedPolicy, StopRule, INITIAL_MIXING,
    STARVED_FRACTION,
};
pub use estep::{e_step, interval_integral, partial_occupancy, EStepEstimators};
pub use kernels::{interval_kernels, kernel_steps, survival_generator, KernelStep, StepKind, TransitionKernels};
pub use recursion::{forward_backward, log_likelihood, RecursionState, C_FLOOR};
