//! Python bindings for `mmnpp`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mmnpp::calibrate::{forward_backward, FitOptions, RecursionState, StopRule};
use mmnpp::decode::{most_likely_regimes, smoothed_probs, window_expectations, ResidualBasis, WindowGrid};
use mmnpp::diagnostics::{self, OrderSelectionOptions, RunsCenter, TestReport};
use mmnpp::simulate::{simulate_mmnpp, SimulationConfig};
use mmnpp::{matexp, EventSequence, ExposureStepFunction, ModelParams, SquareMatrix};

pyo3::create_exception!(pymmnpp, MmnppError, PyValueError);

fn err(e: mmnpp::Error) -> PyErr {
    MmnppError::new_err(format!("{}: {e}", e.kind()))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SquareMatrix> {
    SquareMatrix::from_rows(&rows).map_err(err)
}

#[pyclass(name = "Model", module = "pymmnpp", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(q: Vec<Vec<f64>>, lam: Vec<f64>, pi: Vec<f64>) -> PyResult<Self> {
        Ok(PyModel { inner: ModelParams::from_rows(&q, &lam, &pi).map_err(err)? })
    }

    #[staticmethod]
    fn poisson(lam: f64) -> PyResult<Self> {
        Ok(PyModel { inner: ModelParams::poisson(lam).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel { inner: mmnpp::io::read_model(text.as_bytes()).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        mmnpp::io::write_model(&mut buf, &self.inner).map_err(err)?;
        Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn q(&self) -> Vec<Vec<f64>> {
        self.inner.generator().to_rows()
    }

    #[getter]
    fn lam(&self) -> Vec<f64> {
        self.inner.lambda().to_vec()
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.pi().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Model(order={}, lam={:?})", self.inner.order(), self.inner.lambda())
    }
}

#[pyclass(name = "Exposure", module = "pymmnpp", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyExposure {
    inner: ExposureStepFunction,
}

#[pymethods]
impl PyExposure {
    #[new]
    fn new(starts: Vec<f64>, values: Vec<f64>, horizon: f64) -> PyResult<Self> {
        Ok(PyExposure { inner: ExposureStepFunction::new(starts, values, horizon).map_err(err)? })
    }

    #[staticmethod]
    fn constant(value: f64, horizon: f64) -> PyResult<Self> {
        Ok(PyExposure { inner: ExposureStepFunction::constant(value, horizon).map_err(err)? })
    }

    #[staticmethod]
    fn cycling(levels: Vec<f64>, period: f64, horizon: f64) -> PyResult<Self> {
        Ok(PyExposure { inner: ExposureStepFunction::cycling(&levels, period, horizon).map_err(err)? })
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    #[getter]
    fn starts(&self) -> Vec<f64> {
        self.inner.starts().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn at(&self, t: f64) -> PyResult<f64> {
        self.inner.exposure_at(t).map_err(err)
    }

    fn operational_time(&self, t: f64) -> PyResult<f64> {
        self.inner.operational_time(t).map_err(err)
    }
}

#[pyclass(name = "FitResult", module = "pymmnpp", frozen)]
pub struct PyFitResult {
    inner: mmnpp::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn model(&self) -> PyModel {
        PyModel { inner: self.inner.params.clone() }
    }

    #[getter]
    fn loglik(&self) -> Vec<f64> {
        self.inner.loglik.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn a_hat(&self) -> Vec<Vec<f64>> {
        self.inner.estimators.a_hat.to_rows()
    }

    #[getter]
    fn n_hat(&self) -> Vec<f64> {
        self.inner.estimators.n_hat.clone()
    }

    #[getter]
    fn t_hat(&self) -> Vec<f64> {
        self.inner.estimators.t_hat.clone()
    }

    #[getter]
    fn t_star_hat(&self) -> Vec<f64> {
        self.inner.estimators.t_star_hat.clone()
    }

    /// `(claim_times, probabilities, most_likely_states)` at the fitted parameters.
    fn decode(&self) -> (Vec<f64>, Vec<Vec<f64>>, Vec<usize>) {
        claim_decode(&self.inner.recursion)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(order={}, loglik={:.4}, iterations={}, converged={})",
            self.inner.params.order(),
            self.inner.final_loglik(),
            self.inner.iterations,
            self.inner.converged
        )
    }
}

fn claim_decode(rec: &RecursionState) -> (Vec<f64>, Vec<Vec<f64>>, Vec<usize>) {
    let series = smoothed_probs(rec);
    let states = most_likely_regimes(&series);
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for ((t, (p, k)), s) in series.times.iter().zip(series.probs.iter().zip(&series.kinds)).zip(states) {
        if k.is_claim() {
            out.0.push(*t);
            out.1.push(p.clone());
            out.2.push(s);
        }
    }
    out
}

fn events(claims: &[f64], gamma: &PyExposure) -> PyResult<EventSequence> {
    EventSequence::build(claims, &gamma.inner).map_err(err)
}

fn report<'py>(py: Python<'py>, r: &TestReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("test", &r.test)?;
    d.set_item("statistic", r.statistic)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("lag", r.lag)?;
    Ok(d)
}

#[pyfunction]
fn expm(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(matexp::expm(&matrix(a)?).map_err(err)?.to_rows())
}

#[pyfunction]
fn van_loan_integral(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, t: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(matexp::van_loan_integral(&matrix(a)?, &matrix(b)?, t).map_err(err)?.to_rows())
}

/// Returns `(claims, jump_times, states)`; states are 0-based.
#[pyfunction]
#[pyo3(signature = (model, exposure, seed = 1))]
fn simulate(py: Python<'_>, model: &PyModel, exposure: &PyExposure, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let cfg = SimulationConfig { params: model.inner.clone(), gamma: exposure.inner.clone(), seed };
    let out = py.detach(|| simulate_mmnpp(&cfg)).map_err(err)?;
    Ok((out.claims, out.path.jump_times().to_vec(), out.path.states().to_vec()))
}

#[pyfunction]
fn log_likelihood(model: &PyModel, claims: Vec<f64>, exposure: &PyExposure) -> PyResult<f64> {
    let ev = events(&claims, exposure)?;
    Ok(forward_backward(&model.inner, &ev).map_err(err)?.log_likelihood())
}

#[pyfunction]
#[pyo3(signature = (claims, exposure, order, init = None, tol = 1e-4, max_iter = 500, stop_on_params = false))]
fn fit(
    py: Python<'_>,
    claims: Vec<f64>,
    exposure: &PyExposure,
    order: usize,
    init: Option<PyModel>,
    tol: f64,
    max_iter: usize,
    stop_on_params: bool,
) -> PyResult<PyFitResult> {
    let ev = events(&claims, exposure)?;
    let stop = if stop_on_params { StopRule::Parameters } else { StopRule::LogLikelihood };
    let opts = FitOptions { tol, max_iter, stop };
    let init = init.map(|m| m.inner);
    let inner = py.detach(|| mmnpp::fit(&ev, &exposure.inner, order, init.as_ref(), &opts)).map_err(err)?;
    Ok(PyFitResult { inner })
}

/// Smoothed regime probabilities at each claim.
#[pyfunction]
fn decode(model: &PyModel, claims: Vec<f64>, exposure: &PyExposure) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<usize>)> {
    let ev = events(&claims, exposure)?;
    Ok(claim_decode(&forward_backward(&model.inner, &ev).map_err(err)?))
}

fn basis(name: &str) -> PyResult<ResidualBasis> {
    match name {
        "predictive" => Ok(ResidualBasis::Predictive),
        "smoothed" => Ok(ResidualBasis::Smoothed),
        other => Err(PyValueError::new_err(format!("unknown basis `{other}`"))),
    }
}

/// `(window_starts, observed, expected)` on a uniform grid.
#[pyfunction]
#[pyo3(signature = (model, claims, exposure, window = 1.0, basis = "predictive"))]
fn expected_counts(
    model: &PyModel,
    claims: Vec<f64>,
    exposure: &PyExposure,
    window: f64,
    basis: &str,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let basis = self::basis(basis)?;
    let ev = events(&claims, exposure)?;
    let rec = forward_backward(&model.inner, &ev).map_err(err)?;
    let grid = WindowGrid::uniform(exposure.inner.horizon(), window).map_err(err)?;
    let expected = window_expectations(&model.inner, &rec, &exposure.inner, &grid, basis).map_err(err)?;
    Ok((grid.starts().to_vec(), grid.observed_counts(&claims), expected))
}

#[pyfunction]
fn ljung_box<'py>(py: Python<'py>, series: Vec<f64>, lag: usize) -> PyResult<Bound<'py, PyDict>> {
    report(py, &diagnostics::ljung_box(&series, lag).map_err(err)?)
}

#[pyfunction]
fn bartlett_b<'py>(py: Python<'py>, series: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    report(py, &diagnostics::bartlett_b(&series).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (series, center = "zero"))]
fn runs_test<'py>(py: Python<'py>, series: Vec<f64>, center: &str) -> PyResult<Bound<'py, PyDict>> {
    let c = match center {
        "zero" => RunsCenter::Zero,
        "median" => RunsCenter::Median,
        other => return Err(PyValueError::new_err(format!("unknown center `{other}`"))),
    };
    report(py, &diagnostics::runs_test(&series, c).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (observed, expected, dof = 0))]
fn dispersion(observed: Vec<f64>, expected: Vec<f64>, dof: usize) -> PyResult<f64> {
    diagnostics::dispersion(&observed, &expected, dof).map_err(err)
}

/// `(aic, bic)`
#[pyfunction]
fn information_criteria(loglik: f64, order: usize, n_obs: usize) -> (f64, f64) {
    let ic = diagnostics::information_criteria(loglik, order, n_obs);
    (ic.aic, ic.bic)
}

#[pyfunction]
#[pyo3(signature = (claims, exposure, window = 1.0, alpha = 0.05, max_order = 10, start_order = 2, evidence_check = true))]
fn select_order<'py>(
    py: Python<'py>,
    claims: Vec<f64>,
    exposure: &PyExposure,
    window: f64,
    alpha: f64,
    max_order: usize,
    start_order: usize,
    evidence_check: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let ev = events(&claims, exposure)?;
    let grid = WindowGrid::uniform(exposure.inner.horizon(), window).map_err(err)?;
    let opts = OrderSelectionOptions { alpha, max_order, start_order, evidence_check, ..Default::default() };
    let sel = py.detach(|| diagnostics::select_order(&ev, &exposure.inner, &grid, &opts)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("chosen_order", sel.chosen_order)?;
    d.set_item("white_noise_reached", !sel.exhausted)?;
    d.set_item("orders", sel.reports.iter().map(|r| r.order).collect::<Vec<_>>())?;
    d.set_item("p_values", sel.reports.iter().map(|r| r.bartlett.p_value).collect::<Vec<_>>())?;
    let fits = sel.fits.into_iter().map(|inner| PyFitResult { inner }).collect::<Vec<_>>();
    d.set_item("fits", fits)?;
    Ok(d)
}

#[pymodule]
fn pymmnpp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("MmnppError", m.py().get_type::<MmnppError>())?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyExposure>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(expm, m)?)?;
    m.add_function(wrap_pyfunction!(van_loan_integral, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(expected_counts, m)?)?;
    m.add_function(wrap_pyfunction!(ljung_box, m)?)?;
    m.add_function(wrap_pyfunction!(bartlett_b, m)?)?;
    m.add_function(wrap_pyfunction!(runs_test, m)?)?;
    m.add_function(wrap_pyfunction!(dispersion, m)?)?;
    m.add_function(wrap_pyfunction!(information_criteria, m)?)?;
    m.add_function(wrap_pyfunction!(select_order, m)?)?;
    Ok(())
}
