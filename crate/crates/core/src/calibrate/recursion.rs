use rayon::prelude::*;

use super::kernels::{kernel_steps, KernelStep};
use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::matexp::SquareMatrix;
use crate::model::ModelParams;

/// Normalizers below this abort the recursion.
pub const C_FLOOR: f64 = 1e-300;

/// Output of the scaled forward/backward pass over `m` steps.
///
/// `L(0) = π`, `L(k)` is the filtered regime distribution just after step
/// `k`, `R(m+1) = 1` and `R(k) = f_k R(k+1) / c_k`. The product of the
/// `c_k` is the likelihood of the observed record.
#[derive(Debug, Clone)]
pub struct RecursionState {
    steps: Vec<KernelStep>,
    forward: Vec<Vec<f64>>,
    /// `backward[k-1] = R(k)` for `k = 1..=m+1`
    backward: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl RecursionState {
    /// Number of steps `m` (merged events plus the optional horizon step).
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn steps(&self) -> &[KernelStep] {
        &self.steps
    }

    /// `L(k)` for `0 ≤ k ≤ m`.
    pub fn forward(&self, k: usize) -> &[f64] {
        &self.forward[k]
    }

    /// `R(k)` for `1 ≤ k ≤ m + 1`.
    pub fn backward(&self, k: usize) -> &[f64] {
        &self.backward[k - 1]
    }

    /// `c_k` for `1 ≤ k ≤ m`.
    pub fn normalizer(&self, k: usize) -> f64 {
        self.c[k - 1]
    }

    pub fn normalizers(&self) -> &[f64] {
        &self.c
    }

    pub fn log_likelihood(&self) -> f64 {
        log_likelihood(self)
    }
}

/// `Σ log c_k` over every step.
pub fn log_likelihood(recursion: &RecursionState) -> f64 {
    recursion.c.iter().map(|c| c.ln()).sum()
}

pub fn forward_backward(params: &ModelParams, events: &EventSequence) -> Result<RecursionState> {
    forward_backward_steps(params, kernel_steps(events)?)
}

pub(crate) fn forward_backward_steps(params: &ModelParams, steps: Vec<KernelStep>) -> Result<RecursionState> {
    let r = params.order();
    let kernels: Vec<SquareMatrix> = steps
        .par_iter()
        .map(|s| s.kernels(params).map(|k| k.f))
        .collect::<Result<_>>()?;

    let m = steps.len();
    let mut forward = Vec::with_capacity(m + 1);
    let mut c = Vec::with_capacity(m);
    forward.push(params.pi().to_vec());
    for (k, f) in kernels.iter().enumerate() {
        let mut v = f.left_mul_vec(&forward[k]);
        let ck: f64 = v.iter().sum();
        if !(ck >= C_FLOOR) || !ck.is_finite() {
            return Err(Error::UnderflowCollapse { k: k + 1, value: ck });
        }
        for x in &mut v {
            *x /= ck;
        }
        c.push(ck);
        forward.push(v);
    }

    let mut backward = vec![Vec::new(); m + 1];
    backward[m] = vec![1.0; r];
    for k in (0..m).rev() {
        let mut v = kernels[k].mul_vec(&backward[k + 1]);
        for x in &mut v {
            *x /= c[k];
        }
        backward[k] = v;
    }
    Ok(RecursionState { steps, forward, backward, c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::ExposureStepFunction;

    #[test]
    fn scalar_chain_closed_form() {
        let lambda = 3.0;
        let claims = [0.2, 0.9, 1.1, 2.4, 3.0];
        let g = ExposureStepFunction::constant(1.0, 3.0).unwrap();
        let ev = EventSequence::build(&claims, &g).unwrap();
        let rec = forward_backward(&ModelParams::poisson(lambda).unwrap(), &ev).unwrap();
        assert_eq!(rec.len(), claims.len());
        let mut prev = 0.0;
        for (k, &t) in claims.iter().enumerate() {
            let expected = lambda * (-lambda * (t - prev)).exp();
            assert!((rec.normalizer(k + 1) - expected).abs() < 1e-14 * expected.max(1.0));
            assert_eq!(rec.forward(k + 1), &[1.0]);
            prev = t;
        }
        let ll = 5.0 * lambda.ln() - lambda * 3.0;
        assert!((rec.log_likelihood() - ll).abs() < 1e-12);
    }

    #[test]
    fn uninformative_observations_keep_prior() {
        let p = ModelParams::from_rows(&[vec![-0.7, 0.7], vec![0.7, -0.7]], &[4.0, 4.0], &[0.5, 0.5]).unwrap();
        let g = ExposureStepFunction::cycling(&[1.0, 2.0], 0.5, 3.0).unwrap();
        let ev = EventSequence::build(&[0.1, 0.4, 0.45, 1.7, 2.2, 2.9], &g).unwrap();
        let rec = forward_backward(&p, &ev).unwrap();
        for k in 0..=rec.len() {
            let l = rec.forward(k);
            assert!((l[0] - 0.5).abs() < 1e-12 && (l[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn redundant_breakpoint_leaves_likelihood_unchanged() {
        let p = ModelParams::from_rows(&[vec![-0.4, 0.4], vec![0.9, -0.9]], &[2.0, 7.0], &[0.3, 0.7]).unwrap();
        let claims = [0.3, 0.35, 1.2, 1.9, 2.6];
        let plain = ExposureStepFunction::new(vec![0.0, 1.0], vec![1.5, 0.5], 3.0).unwrap();
        let split = ExposureStepFunction::new(vec![0.0, 0.8, 1.0, 2.2], vec![1.5, 1.5, 0.5, 0.5], 3.0).unwrap();
        let a = forward_backward(&p, &EventSequence::build(&claims, &plain).unwrap()).unwrap();
        let b = forward_backward(&p, &EventSequence::build(&claims, &split).unwrap()).unwrap();
        assert_eq!(b.len(), a.len() + 2);
        assert!((a.log_likelihood() - b.log_likelihood()).abs() < 1e-10);
    }

    #[test]
    fn filtered_vectors_are_distributions() {
        let p = ModelParams::from_rows(
            &[vec![-0.8, 0.5, 0.3], vec![0.6, -1.0, 0.4], vec![0.3, 0.5, -0.8]],
            &[5.0, 10.0, 20.0],
            &[1.0 / 3.0; 3],
        )
        .unwrap();
        let g = ExposureStepFunction::cycling(&[1.0, 2.0], 1.0, 4.0).unwrap();
        let claims: Vec<f64> = (1..200).map(|i| i as f64 * 0.02).collect();
        let rec = forward_backward(&p, &EventSequence::build(&claims, &g).unwrap()).unwrap();
        for k in 0..=rec.len() {
            let l = rec.forward(k);
            assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(l.iter().all(|x| *x >= -1e-12));
        }
        assert!(rec.normalizers().iter().all(|c| *c > 0.0));
    }

    #[test]
    fn collapse_reported_with_step() {
        // regime 1 can never produce a claim 700 time units in
        let p = ModelParams::poisson(5.0).unwrap();
        let g = ExposureStepFunction::constant(1.0, 800.0).unwrap();
        let ev = EventSequence::build(&[1.0, 700.0], &g).unwrap();
        match forward_backward(&p, &ev) {
            Err(Error::UnderflowCollapse { k, .. }) => assert_eq!(k, 2),
            other => panic!("expected collapse, got {other:?}"),
        }
    }
}
