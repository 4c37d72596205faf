//! Residual diagnostics and order selection.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::calibrate::{fit, FitOptions, FitResult};
use crate::decode::{residuals, window_expectations, ResidualBasis, WindowGrid};
use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::exposure::ExposureStepFunction;

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    #[serde(rename = "pValue")]
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl TestReport {
    fn new(test: &str, statistic: f64, p_value: f64) -> Self {
        TestReport { test: test.into(), statistic, p_value: p_value.clamp(0.0, 1.0), lag: None, n: None }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample autocorrelations `ρ̂_1..ρ̂_maxLag` with the biased (`1/n`) estimator.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::SeriesTooShort { len: n, needed: max_lag + 1 });
    }
    let m = mean(series);
    let d: Vec<f64> = series.iter().map(|x| x - m).collect();
    let c0: f64 = d.iter().map(|x| x * x).sum();
    if !(c0 > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((1..=max_lag)
        .map(|k| d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// Ljung-Box portmanteau statistic against a chi-square with `lag` degrees of freedom.
pub fn ljung_box(series: &[f64], lag: usize) -> Result<TestReport> {
    if lag == 0 {
        return Err(Error::SeriesTooShort { len: 0, needed: 1 });
    }
    let rho = acf(series, lag)?;
    let n = series.len() as f64;
    let q = n * (n + 2.0) * rho.iter().enumerate().map(|(k, r)| r * r / (n - (k + 1) as f64)).sum::<f64>();
    let chi = ChiSquared::new(lag as f64).expect("positive degrees of freedom");
    let mut rep = TestReport::new("ljung-box", q, chi.sf(q));
    rep.lag = Some(lag);
    rep.n = Some(series.len());
    Ok(rep)
}

/// Upper tail of the Kolmogorov distribution, `P[K > x]`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // Jacobi theta form converges fast for small x
        let t = -std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x
            * (1..=20).map(|k| (t * ((2 * k - 1) as f64).powi(2)).exp()).sum::<f64>();
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Periodogram ordinates at Fourier frequencies `j = 1..⌊(n−1)/2⌋`.
pub fn periodogram(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let m = mean(series);
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = (n.saturating_sub(1)) / 2;
    buf[1..=half].iter().map(|z| z.norm_sqr() / n as f64).collect()
}

/// Bartlett's cumulative-periodogram test for white noise.
pub fn bartlett_b(series: &[f64]) -> Result<TestReport> {
    const MIN_LEN: usize = 16;
    if series.len() < MIN_LEN {
        return Err(Error::SeriesTooShort { len: series.len(), needed: MIN_LEN });
    }
    let ord = periodogram(series);
    let total: f64 = ord.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let m = ord.len() as f64;
    let mut acc = 0.0;
    let mut b: f64 = 0.0;
    for (j, i) in ord.iter().enumerate() {
        acc += i;
        b = b.max((acc / total - (j + 1) as f64 / m).abs());
    }
    b *= m.sqrt();
    let mut rep = TestReport::new("bartlett-b", b, kolmogorov_sf(b));
    rep.n = Some(series.len());
    Ok(rep)
}

/// Reference level that splits a series into runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunsCenter {
    #[default]
    Zero,
    Median,
}

/// Wald-Wolfowitz runs test on the signs of `series − center`, two-sided.
/// Values equal to the center are dropped.
pub fn runs_test(series: &[f64], center: RunsCenter) -> Result<TestReport> {
    let c = match center {
        RunsCenter::Zero => 0.0,
        RunsCenter::Median => {
            let mut s = series.to_vec();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            if n == 0 {
                return Err(Error::DegenerateSigns);
            }
            if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
        }
    };
    let signs: Vec<bool> = series.iter().filter(|&&x| x != c).map(|&x| x > c).collect();
    let n1 = signs.iter().filter(|s| **s).count() as f64;
    let n2 = signs.len() as f64 - n1;
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::DegenerateSigns);
    }
    let runs = 1 + signs.windows(2).filter(|w| w[0] != w[1]).count();
    let n = n1 + n2;
    let mu = 2.0 * n1 * n2 / n + 1.0;
    let var = 2.0 * n1 * n2 * (2.0 * n1 * n2 - n) / (n * n * (n - 1.0));
    if !(var > 0.0) {
        return Err(Error::DegenerateSigns);
    }
    let z = (runs as f64 - mu) / var.sqrt();
    let p = 2.0 * Normal::standard().sf(z.abs());
    let mut rep = TestReport::new("runs", z, p);
    rep.n = Some(signs.len());
    Ok(rep)
}

/// Pearson dispersion `Σ(obs − exp)²/exp / (n − dof)`.
pub fn dispersion(observed: &[f64], expected: &[f64], dof: usize) -> Result<f64> {
    if observed.len() != expected.len() {
        return Err(Error::LengthMismatch { left: observed.len(), right: expected.len() });
    }
    if let Some(index) = expected.iter().position(|e| !(*e > 0.0)) {
        return Err(Error::NonPositiveExpected { index });
    }
    if observed.len() <= dof {
        return Err(Error::SeriesTooShort { len: observed.len(), needed: dof + 1 });
    }
    let chi: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    Ok(chi / (observed.len() - dof) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub parameters: usize,
    pub aic: f64,
    pub bic: f64,
}

/// Free parameters of an order-`r` model: `r(r−1)` rates and `r` intensities.
pub fn free_parameters(order: usize) -> usize {
    order * order
}

pub fn information_criteria(loglik: f64, order: usize, n_obs: usize) -> InformationCriteria {
    let p = free_parameters(order);
    InformationCriteria {
        parameters: p,
        aic: -2.0 * loglik + 2.0 * p as f64,
        bic: -2.0 * loglik + p as f64 * (n_obs as f64).ln(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub sum: f64,
    #[serde(rename = "sumAbs")]
    pub sum_abs: f64,
    #[serde(rename = "sumSq")]
    pub sum_sq: f64,
}

pub fn residual_summary(residuals: &[f64]) -> ResidualSummary {
    ResidualSummary {
        sum: residuals.iter().sum(),
        sum_abs: residuals.iter().map(|x| x.abs()).sum(),
        sum_sq: residuals.iter().map(|x| x * x).sum(),
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
/// Uses Stephens' finite-sample adjustment of the asymptotic tail.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestReport> {
    if sample.is_empty() {
        return Err(Error::SeriesTooShort { len: 0, needed: 1 });
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    let mut rep = TestReport::new("ks", d, kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d));
    rep.n = Some(s.len());
    Ok(rep)
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::SeriesTooShort { len: a.len().min(b.len()), needed: 1 });
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let mut rep = TestReport::new("ks2", d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d));
    rep.n = Some(x.len() + y.len());
    Ok(rep)
}

/// Settings for the order search.
#[derive(Debug, Clone)]
pub struct OrderSelectionOptions {
    pub alpha: f64,
    pub max_order: usize,
    pub start_order: usize,
    /// Run the order-1 evidence-of-regimes check before searching.
    pub evidence_check: bool,
    pub dispersion_threshold: f64,
    pub runs_alpha: f64,
    pub basis: ResidualBasis,
    pub fit: FitOptions,
}

impl Default for OrderSelectionOptions {
    fn default() -> Self {
        OrderSelectionOptions {
            alpha: 0.05,
            max_order: 10,
            start_order: 2,
            evidence_check: true,
            dispersion_threshold: 1.2,
            runs_alpha: 0.05,
            basis: ResidualBasis::Predictive,
            fit: FitOptions::default(),
        }
    }
}

/// Order-1 statistics deciding whether a regime search is warranted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeEvidence {
    pub dispersion: f64,
    pub runs: TestReport,
    pub present: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderReport {
    pub order: usize,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub bartlett: TestReport,
    #[serde(flatten)]
    pub criteria: InformationCriteria,
}

#[derive(Debug, Clone)]
pub struct OrderSelection {
    pub chosen_order: usize,
    pub fits: Vec<FitResult>,
    pub reports: Vec<OrderReport>,
    pub evidence: Option<RegimeEvidence>,
    /// True when `max_order` was reached without white-noise residuals.
    pub exhausted: bool,
}

/// Per-window residuals of a fit.
pub fn window_residuals(
    fit_result: &FitResult,
    events: &EventSequence,
    gamma: &ExposureStepFunction,
    grid: &WindowGrid,
    basis: ResidualBasis,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let observed = grid.observed_counts(&events.claim_times());
    let expected = window_expectations(&fit_result.params, &fit_result.recursion, gamma, grid, basis)?;
    Ok((observed, expected))
}

/// Increase the number of regimes until the per-window residuals pass
/// Bartlett's white-noise test.
pub fn select_order(
    events: &EventSequence,
    gamma: &ExposureStepFunction,
    grid: &WindowGrid,
    opts: &OrderSelectionOptions,
) -> Result<OrderSelection> {
    let start = opts.start_order.max(1);
    let mut fits = Vec::new();
    let mut reports = Vec::new();
    let mut evidence = None;
    let n_obs = events.claim_count();

    if opts.evidence_check && start > 1 {
        let base = fit(events, gamma, 1, None, &opts.fit)?;
        let (obs, exp) = window_residuals(&base, events, gamma, grid, opts.basis)?;
        let disp = dispersion(&obs, &exp, free_parameters(1))?;
        let runs = runs_test(&residuals(&obs, &exp), RunsCenter::Zero)?;
        let present = disp > opts.dispersion_threshold || runs.p_value < opts.runs_alpha;
        evidence = Some(RegimeEvidence { dispersion: disp, runs, present });
        if !present {
            let bartlett = bartlett_b(&residuals(&obs, &exp))?;
            reports.push(order_report(&base, bartlett, n_obs));
            fits.push(base);
            log::info!("no evidence of regimes; keeping order 1");
            return Ok(OrderSelection { chosen_order: 1, fits, reports, evidence, exhausted: false });
        }
    }

    let mut order = start;
    loop {
        let f = fit(events, gamma, order, None, &opts.fit)?;
        let (obs, exp) = window_residuals(&f, events, gamma, grid, opts.basis)?;
        let bartlett = bartlett_b(&residuals(&obs, &exp))?;
        log::info!("order {order}: Bartlett B = {:.4}, p = {:.4}", bartlett.statistic, bartlett.p_value);
        let white = !bartlett.rejects(opts.alpha);
        reports.push(order_report(&f, bartlett, n_obs));
        fits.push(f);
        if white || order >= opts.max_order {
            return Ok(OrderSelection { chosen_order: order, fits, reports, evidence, exhausted: !white });
        }
        order += 1;
    }
}

fn order_report(f: &FitResult, bartlett: TestReport, n_obs: usize) -> OrderReport {
    OrderReport {
        order: f.params.order(),
        loglik: f.final_loglik(),
        iterations: f.iterations,
        converged: f.converged,
        bartlett,
        criteria: information_criteria(f.final_loglik(), f.params.order(), n_obs),
    }
}
