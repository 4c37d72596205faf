//! Markov-modulated non-homogeneous Poisson processes.
//!
//! The event intensity at time `t` is `λ_{M(t)}·γ(t)`, where `M` is a
//! hidden continuous-time Markov chain and `γ` a known, strictly positive,
//! piecewise-constant exposure. The crate simulates such processes,
//! calibrates `(Q, λ)` by an underflow-safe EM algorithm, decodes the
//! hidden regimes and runs residual diagnostics for order selection.

pub mod calibrate;
pub mod cli;
pub mod decode;
pub mod diagnostics;
pub mod error;
pub mod events;
pub mod exposure;
pub mod io;
pub mod matexp;
pub mod model;
pub mod simulate;

pub use calibrate::{fit, FitOptions, FitResult};
pub use error::{Error, Result};
pub use events::{EventKind, EventSequence};
pub use exposure::ExposureStepFunction;
pub use matexp::SquareMatrix;
pub use model::{ModelParams, RegimePath};
