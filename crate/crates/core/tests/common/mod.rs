//! Independent reference computations shared by the integration tests.
//!
//! Nothing here goes through the crate's recursion, kernels or matrix
//! exponential: exponentials come from nalgebra, likelihoods from plain
//! unscaled products and integrals from adaptive Gauss-Legendre quadrature.

#![allow(dead_code)]

use mmnpp::{ExposureStepFunction, ModelParams, SquareMatrix};
use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;

pub type Mat = DMatrix<f64>;

pub fn to_na(m: &SquareMatrix) -> Mat {
    let d = m.dim();
    Mat::from_fn(d, d, |i, j| m[(i, j)])
}

pub fn expm(a: &Mat) -> Mat {
    a.clone().exp()
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl_panel<F: Fn(f64) -> Vec<f64>>(f: &F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
    let (x, w) = rule;
    let h = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc: Vec<f64> = Vec::new();
    for (xi, wi) in x.iter().zip(w) {
        let v = f(mid + h * xi);
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        }
        for (s, y) in acc.iter_mut().zip(v) {
            *s += h * wi * y;
        }
    }
    acc
}

fn adapt<F: Fn(f64) -> Vec<f64>>(f: &F, a: f64, b: f64, whole: Vec<f64>, tol: f64, depth: usize, rule: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
    let m = 0.5 * (a + b);
    let left = gl_panel(f, a, m, rule);
    let right = gl_panel(f, m, b, rule);
    let split: Vec<f64> = left.iter().zip(&right).map(|(l, r)| l + r).collect();
    let err = split.iter().zip(&whole).map(|(s, w)| (s - w).abs()).fold(0.0, f64::max);
    if err <= tol || depth == 0 {
        return split;
    }
    let l = adapt(f, a, m, left, 0.5 * tol, depth - 1, rule);
    let r = adapt(f, m, b, right, 0.5 * tol, depth - 1, rule);
    l.iter().zip(&r).map(|(x, y)| x + y).collect()
}

/// Adaptive quadrature of a vector-valued integrand with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> Vec<f64>>(f: F, a: f64, b: f64, tol: f64) -> Vec<f64> {
    let rule = gauss_legendre(10);
    if b <= a {
        return f(a).iter().map(|_| 0.0).collect();
    }
    let whole = gl_panel(&f, a, b, &rule);
    adapt(&f, a, b, whole, tol, 20, &rule)
}

/// `∫₀ᵗ e^{A(t−s)} B e^{As} ds` by quadrature.
pub fn van_loan_quadrature(a: &Mat, b: &Mat, t: f64, tol: f64) -> Mat {
    let d = a.nrows();
    let v = integrate(
        |s| {
            let m = expm(&(a * (t - s))) * b * expm(&(a * s));
            m.iter().copied().collect()
        },
        0.0,
        t,
        tol,
    );
    Mat::from_column_slice(d, d, &v)
}

/// One interval of the merged record, built without the crate's helpers.
#[derive(Debug, Clone, Copy)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub gamma: f64,
    /// Exposure at `end` when the interval closes with a claim.
    pub claim_gamma: Option<f64>,
}

/// Claims and exposure breakpoints merged (breakpoints first at ties) plus
/// the survival-only stretch up to the horizon.
pub fn intervals(claims: &[f64], gamma: &ExposureStepFunction) -> Vec<Interval> {
    let mut marks: Vec<(f64, Option<usize>)> = gamma.starts()[1..].iter().map(|&s| (s, None)).collect();
    marks.extend(claims.iter().enumerate().map(|(i, &t)| (t, Some(i))));
    marks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.is_some().cmp(&b.1.is_some())));
    let level = |t: f64| {
        let k = gamma.starts().iter().rposition(|&s| s <= t).unwrap();
        gamma.values()[k]
    };
    let mut out = Vec::new();
    let mut prev = 0.0;
    for (t, c) in marks {
        let g = level(prev);
        out.push(Interval { start: prev, end: t, gamma: g, claim_gamma: c.map(|_| level(t)) });
        prev = t;
    }
    if gamma.horizon() > prev {
        out.push(Interval { start: prev, end: gamma.horizon(), gamma: level(prev), claim_gamma: None });
    }
    out
}

pub struct Oracle {
    pub q: Mat,
    pub lambda: DVector<f64>,
    pub pi: RowDVector<f64>,
    pub parts: Vec<Interval>,
    /// `fwd[k] = π f_1 … f_k` (unnormalized)
    pub fwd: Vec<RowDVector<f64>>,
    /// `bwd[k] = f_{k+1} … f_m 1` (unnormalized)
    pub bwd: Vec<DVector<f64>>,
    pub likelihood: f64,
}

impl Oracle {
    pub fn new(params: &ModelParams, claims: &[f64], gamma: &ExposureStepFunction) -> Self {
        let q = to_na(params.generator());
        let r = q.nrows();
        let lambda = DVector::from_column_slice(params.lambda());
        let pi = RowDVector::from_row_slice(params.pi());
        let parts = intervals(claims, gamma);
        let kernels: Vec<Mat> = parts
            .iter()
            .map(|p| {
                let a = &q - Mat::from_diagonal(&(&lambda * p.gamma));
                let fbar = expm(&(a * (p.end - p.start)));
                match p.claim_gamma {
                    Some(g) => fbar * Mat::from_diagonal(&(&lambda * g)),
                    None => fbar,
                }
            })
            .collect();
        let mut fwd = vec![pi.clone()];
        for f in &kernels {
            let next = fwd.last().unwrap() * f;
            fwd.push(next);
        }
        let m = kernels.len();
        let mut bwd = vec![DVector::from_element(r, 1.0); m + 1];
        for k in (0..m).rev() {
            bwd[k] = &kernels[k] * &bwd[k + 1];
        }
        let likelihood = fwd[m].sum();
        Oracle { q, lambda, pi, parts, fwd, bwd, likelihood }
    }

    pub fn order(&self) -> usize {
        self.q.nrows()
    }

    pub fn log_likelihood(&self) -> f64 {
        self.likelihood.ln()
    }

    fn survival(&self, k: usize) -> Mat {
        &self.q - Mat::from_diagonal(&(&self.lambda * self.parts[k].gamma))
    }

    /// `(α(s), β(s))` at absolute time `s` inside interval `k` (0-based).
    fn alpha_beta(&self, k: usize, s: f64) -> (RowDVector<f64>, DVector<f64>) {
        let p = self.parts[k];
        let a = self.survival(k);
        let alpha = &self.fwd[k] * expm(&(&a * (s - p.start)));
        let tail = match p.claim_gamma {
            Some(g) => Mat::from_diagonal(&(&self.lambda * g)) * &self.bwd[k + 1],
            None => self.bwd[k + 1].clone(),
        };
        let beta = expm(&(&a * (p.end - s))) * tail;
        (alpha, beta)
    }

    /// Posterior regime probabilities at absolute time `s` inside interval `k`.
    pub fn posterior_at(&self, k: usize, s: f64) -> Vec<f64> {
        let (al, be) = self.alpha_beta(k, s);
        (0..self.order()).map(|i| al[i] * be[i] / self.likelihood).collect()
    }

    /// Smoothed probabilities just after each claim, by direct products.
    pub fn smoothed_at_claims(&self) -> Vec<Vec<f64>> {
        (0..self.parts.len())
            .filter(|&k| self.parts[k].claim_gamma.is_some())
            .map(|k| (0..self.order()).map(|i| self.fwd[k + 1][i] * self.bwd[k + 1][i] / self.likelihood).collect())
            .collect()
    }

    /// â, n̂, T̂ and T̂* by quadrature of the posterior integrands.
    pub fn estimators(&self, tol: f64) -> (Mat, Vec<f64>, Vec<f64>, Vec<f64>) {
        let r = self.order();
        let mut a_hat = Mat::zeros(r, r);
        let mut t_hat = vec![0.0; r];
        let mut t_star = vec![0.0; r];
        for k in 0..self.parts.len() {
            let p = self.parts[k];
            let v = integrate(
                |s| {
                    let (al, be) = self.alpha_beta(k, s);
                    let mut out = Vec::with_capacity(r * r);
                    for i in 0..r {
                        for j in 0..r {
                            out.push(al[i] * be[j] / self.likelihood);
                        }
                    }
                    out
                },
                p.start,
                p.end,
                tol,
            );
            for i in 0..r {
                t_hat[i] += v[i * r + i];
                t_star[i] += p.gamma * v[i * r + i];
                for j in 0..r {
                    if i != j {
                        a_hat[(i, j)] += self.q[(i, j)] * v[i * r + j];
                    }
                }
            }
        }
        let mut n_hat = vec![0.0; r];
        for post in self.smoothed_at_claims() {
            for i in 0..r {
                n_hat[i] += post[i];
            }
        }
        (a_hat, n_hat, t_hat, t_star)
    }

    /// `Σ_i λ_i ∫_{lo}^{hi} γ(s) P[M(s)=i | data] ds` by quadrature.
    pub fn expected_in(&self, lo: f64, hi: f64, tol: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.parts.len() {
            let p = self.parts[k];
            let a = p.start.max(lo);
            let b = p.end.min(hi);
            if b > a {
                let v = integrate(
                    |s| {
                        let post = self.posterior_at(k, s);
                        vec![(0..self.order()).map(|i| self.lambda[i] * post[i]).sum::<f64>()]
                    },
                    a,
                    b,
                    tol,
                );
                total += p.gamma * v[0];
            }
        }
        total
    }

    /// `E[N(lo, hi) | claims before lo]` by quadrature of the unconditioned
    /// regime law started from the filtered distribution at `lo`.
    pub fn predicted_in(&self, lo: f64, hi: f64, tol: f64) -> f64 {
        let k = self.parts.iter().position(|p| p.start < lo && lo <= p.end).unwrap_or(0);
        let p = self.parts[k];
        let alpha = &self.fwd[k] * expm(&(self.survival(k) * (lo - p.start).max(0.0)));
        let start = &alpha / alpha.sum();
        let mut total = 0.0;
        for part in &self.parts {
            let a = part.start.max(lo);
            let b = part.end.min(hi);
            if b > a {
                let v = integrate(|s| vec![(&start * expm(&(&self.q * (s - lo))) * &self.lambda)[0]], a, b, tol);
                total += part.gamma * v[0];
            }
        }
        total
    }
}

/// Random valid model of order `r`.
pub fn random_model<R: Rng>(rng: &mut R, r: usize, rate: (f64, f64), intensity: (f64, f64)) -> ModelParams {
    let mut q = vec![vec![0.0; r]; r];
    for i in 0..r {
        for j in 0..r {
            if i != j {
                q[i][j] = rng.random_range(rate.0..rate.1);
            }
        }
        q[i][i] = -q[i].iter().sum::<f64>();
    }
    let lambda: Vec<f64> = (0..r).map(|_| rng.random_range(intensity.0..intensity.1)).collect();
    let mut pi: Vec<f64> = (0..r).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= s);
    ModelParams::from_rows(&q, &lambda, &pi).unwrap()
}

/// Random exposure with a few steps on `[0, horizon]`.
pub fn random_exposure<R: Rng>(rng: &mut R, horizon: f64, pieces: usize) -> ExposureStepFunction {
    let mut cuts: Vec<f64> = (1..pieces).map(|_| rng.random_range(0.05..0.95) * horizon).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut starts = vec![0.0];
    starts.extend(cuts);
    let values = starts.iter().map(|_| rng.random_range(0.5..2.5)).collect();
    ExposureStepFunction::new(starts, values, horizon).unwrap()
}

/// `n` sorted uniform claim times on `(0, horizon)`.
pub fn random_claims<R: Rng>(rng: &mut R, n: usize, horizon: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..horizon)).collect();
    t.sort_by(f64::total_cmp);
    t
}

/// The order-3 setup used for the recovery experiments.
pub fn recovery_model() -> ModelParams {
    ModelParams::from_rows(
        &[vec![-0.8, 0.5, 0.3], vec![0.6, -1.0, 0.4], vec![0.3, 0.5, -0.8]],
        &[5.0, 10.0, 20.0],
        &[1.0 / 3.0; 3],
    )
    .unwrap()
}

pub fn recovery_exposure() -> ExposureStepFunction {
    ExposureStepFunction::cycling(&[1.0, 2.0, 3.0], 100.0, 1000.0).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
