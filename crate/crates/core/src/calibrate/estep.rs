use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernels::{kernel_steps, survival_generator, KernelStep};
use super::recursion::RecursionState;
use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::matexp::{expm, SquareMatrix, VanLoanBlock};
use crate::model::ModelParams;

/// Steps per work unit. Partial sums are formed per chunk in step order and
/// then combined in chunk order, so results do not depend on thread count.
const CHUNK: usize = 512;

/// Conditional expectations of the complete-data sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EStepEstimators {
    /// Expected regime changes `i → j`; the diagonal holds minus the row sum.
    #[serde(rename = "aHat")]
    pub a_hat: SquareMatrix,
    /// Expected claims in each regime.
    #[serde(rename = "nHat")]
    pub n_hat: Vec<f64>,
    /// Expected calendar time in each regime.
    #[serde(rename = "tHat")]
    pub t_hat: Vec<f64>,
    /// Expected operational time in each regime.
    #[serde(rename = "tStarHat")]
    pub t_star_hat: Vec<f64>,
}

/// `(L(k−1), M·R(k+1))` so that `B = (M·R(k+1))·L(k−1)`, where `M = Λγ`
/// for a claim step and the identity otherwise.
fn van_loan_operands(params: &ModelParams, rec: &RecursionState, k: usize) -> (Vec<f64>, Vec<f64>) {
    let step = rec.steps()[k - 1];
    let left = rec.forward(k - 1).to_vec();
    let mut right = rec.backward(k + 1).to_vec();
    if step.kind.is_claim() {
        for (x, l) in right.iter_mut().zip(params.lambda()) {
            *x *= l * step.gamma_event;
        }
    }
    (left, right)
}

/// `I_k = ∫₀^Δ exp(A(Δ−s)) B exp(As) ds` for step `k` (1-based).
pub fn interval_integral(params: &ModelParams, rec: &RecursionState, k: usize) -> Result<SquareMatrix> {
    let step = rec.steps()[k - 1];
    let (left, right) = van_loan_operands(params, rec, k);
    let b = SquareMatrix::outer(&right, &left)?;
    let a = survival_generator(params, step.gamma);
    let out = VanLoanBlock::new(a, b)?.evaluate(step.dt)?;
    if !out.integral.is_finite() {
        return Err(Error::NonFinite("interval integral"));
    }
    Ok(out.integral)
}

/// Posterior occupancy `∫ P[M(t_{k−1}+s) = i | data] ds` over
/// `s ∈ [from, to] ⊆ [0, Δ_k]` for step `k`.
pub fn partial_occupancy(params: &ModelParams, rec: &RecursionState, k: usize, from: f64, to: f64) -> Result<Vec<f64>> {
    let step: KernelStep = rec.steps()[k - 1];
    let c = rec.normalizer(k);
    if from <= 0.0 && to >= step.dt {
        return Ok(interval_integral(params, rec, k)?.diagonal().into_iter().map(|x| x / c).collect());
    }
    let (left, right) = van_loan_operands(params, rec, k);
    let a = survival_generator(params, step.gamma);
    let before = expm(&a.scale(from))?;
    let after = expm(&a.scale(step.dt - to))?;
    // ∫_from^to e^{A(Δ−s)} B e^{As} ds = e^{A(Δ−to)} VL(to−from) e^{A·from}
    let b = SquareMatrix::outer(&after.mul_vec(&right), &before.left_mul_vec(&left))?;
    let mid = VanLoanBlock::new(a, b)?.evaluate(to - from)?.integral;
    Ok(mid.diagonal().into_iter().map(|x| x / c).collect())
}

pub fn e_step(params: &ModelParams, events: &EventSequence, recursion: &RecursionState) -> Result<EStepEstimators> {
    let steps = kernel_steps(events)?;
    if steps.len() != recursion.len() || steps.iter().zip(recursion.steps()).any(|(a, b)| a != b) {
        return Err(Error::DimensionMismatch("recursion was built for different events".into()));
    }
    e_step_recursion(params, recursion)
}

pub(crate) fn e_step_recursion(params: &ModelParams, rec: &RecursionState) -> Result<EStepEstimators> {
    let r = params.order();
    let m = rec.len();
    let index: Vec<usize> = (1..=m).collect();
    let partials: Vec<(SquareMatrix, Vec<f64>)> = index
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut total = SquareMatrix::zeros(r);
            let mut weighted = vec![0.0; r];
            for &k in chunk {
                let step = rec.steps()[k - 1];
                if step.dt == 0.0 {
                    continue;
                }
                let i_k = interval_integral(params, rec, k)?;
                let w = 1.0 / rec.normalizer(k);
                total.add_scaled(&i_k, w);
                for (acc, d) in weighted.iter_mut().zip(i_k.diagonal()) {
                    *acc += step.gamma * w * d;
                }
            }
            Ok((total, weighted))
        })
        .collect::<Result<_>>()?;

    let mut sum = SquareMatrix::zeros(r);
    let mut t_star_hat = vec![0.0; r];
    for (s, w) in &partials {
        sum.add_scaled(s, 1.0);
        for (acc, x) in t_star_hat.iter_mut().zip(w) {
            *acc += x;
        }
    }

    let mut n_hat = vec![0.0; r];
    for k in 1..=m {
        if rec.steps()[k - 1].kind.is_claim() {
            for ((acc, l), b) in n_hat.iter_mut().zip(rec.forward(k)).zip(rec.backward(k + 1)) {
                *acc += l * b;
            }
        }
    }

    let q = params.generator();
    let mut a_hat = SquareMatrix::zeros(r);
    for i in 0..r {
        let mut row = 0.0;
        for j in 0..r {
            if i != j {
                let v = q[(i, j)] * sum[(j, i)];
                a_hat[(i, j)] = v;
                row += v;
            }
        }
        a_hat[(i, i)] = -row;
    }
    // diag(Σ I_k / c_k) directly; equals â_ii / q_ii whenever q_ii ≠ 0
    let t_hat = sum.diagonal();

    let est = EStepEstimators { a_hat, n_hat, t_hat, t_star_hat };
    if !est.a_hat.is_finite()
        || est.n_hat.iter().chain(&est.t_hat).chain(&est.t_star_hat).any(|x| !x.is_finite())
    {
        return Err(Error::NonFinite("E-step estimators"));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::forward_backward;
    use crate::exposure::ExposureStepFunction;

    fn three_state() -> ModelParams {
        ModelParams::from_rows(
            &[vec![-0.8, 0.5, 0.3], vec![0.6, -1.0, 0.4], vec![0.3, 0.5, -0.8]],
            &[5.0, 10.0, 20.0],
            &[0.2, 0.5, 0.3],
        )
        .unwrap()
    }

    #[test]
    fn order_one_has_no_hidden_structure() {
        let p = ModelParams::poisson(2.5).unwrap();
        let g = ExposureStepFunction::new(vec![0.0, 2.0], vec![1.0, 3.0], 5.0).unwrap();
        let claims = [0.4, 1.1, 2.0, 2.2, 3.9, 4.4];
        let ev = EventSequence::build(&claims, &g).unwrap();
        let rec = forward_backward(&p, &ev).unwrap();
        let est = e_step(&p, &ev, &rec).unwrap();
        assert!((est.n_hat[0] - 6.0).abs() < 1e-12);
        assert!((est.t_hat[0] - 5.0).abs() < 1e-12);
        assert!((est.t_star_hat[0] - g.total_operational_time()).abs() < 1e-12);
        assert_eq!(est.a_hat[(0, 0)], 0.0);
    }

    #[test]
    fn unit_exposure_makes_operational_and_calendar_time_agree() {
        let p = three_state();
        let g = ExposureStepFunction::constant(1.0, 10.0).unwrap();
        let claims: Vec<f64> = (0..120).map(|i| 0.05 + i as f64 * 0.08).collect();
        let ev = EventSequence::build(&claims, &g).unwrap();
        let rec = forward_backward(&p, &ev).unwrap();
        let est = e_step(&p, &ev, &rec).unwrap();
        for i in 0..3 {
            assert!((est.t_hat[i] - est.t_star_hat[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn mass_balance() {
        let p = three_state();
        let g = ExposureStepFunction::cycling(&[1.0, 2.5, 0.7], 2.0, 11.0).unwrap();
        let claims: Vec<f64> = (0..300).map(|i| (i as f64 * 0.0367).powf(1.1)).filter(|t| *t <= 11.0).collect();
        let ev = EventSequence::build(&claims, &g).unwrap();
        let rec = forward_backward(&p, &ev).unwrap();
        let est = e_step(&p, &ev, &rec).unwrap();
        assert!((est.n_hat.iter().sum::<f64>() - claims.len() as f64).abs() < 1e-8);
        assert!((est.t_hat.iter().sum::<f64>() - 11.0).abs() < 1e-8);
        assert!((est.t_star_hat.iter().sum::<f64>() - g.total_operational_time()).abs() < 1e-8);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(est.a_hat[(i, j)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn partial_occupancy_adds_up() {
        let p = three_state();
        let g = ExposureStepFunction::constant(1.3, 2.0).unwrap();
        let ev = EventSequence::build(&[0.3, 1.4], &g).unwrap();
        let rec = forward_backward(&p, &ev).unwrap();
        let dt = rec.steps()[1].dt;
        let whole = partial_occupancy(&p, &rec, 2, 0.0, dt).unwrap();
        let a = partial_occupancy(&p, &rec, 2, 0.0, 0.37 * dt).unwrap();
        let b = partial_occupancy(&p, &rec, 2, 0.37 * dt, dt).unwrap();
        for i in 0..3 {
            assert!((whole[i] - a[i] - b[i]).abs() < 1e-12);
        }
        assert!((whole.iter().sum::<f64>() - dt).abs() < 1e-12);
    }

    #[test]
    fn mismatched_recursion_rejected() {
        let p = ModelParams::poisson(1.0).unwrap();
        let g = ExposureStepFunction::constant(1.0, 2.0).unwrap();
        let ev1 = EventSequence::build(&[0.5], &g).unwrap();
        let ev2 = EventSequence::build(&[0.7], &g).unwrap();
        let rec = forward_backward(&p, &ev1).unwrap();
        assert!(e_step(&p, &ev2, &rec).is_err());
    }
}
