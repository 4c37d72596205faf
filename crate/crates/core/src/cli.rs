//! `mmnpp` command line.
//!
//! Exit codes: 0 on success, 1 on numerical failure or a fit that did not
//! converge, 2 on usage, input or IO errors. Failures are reported on stderr
//! as `{"error": kind, "message": text}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::calibrate::{fit, forward_backward, FitOptions, StopRule};
use crate::decode::{most_likely_regimes, residuals, smoothed_probs, window_expectations, ResidualBasis, StateProbabilitySeries, WindowGrid};
use crate::diagnostics::{
    bartlett_b, dispersion, free_parameters, information_criteria, ljung_box, residual_summary, runs_test,
    select_order, OrderSelectionOptions, RunsCenter, TestReport,
};
use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::exposure::ExposureStepFunction;
use crate::io::{self, FitReport, WindowRow};
use crate::simulate::{simulate_mmnpp, SimulationConfig};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser, Serialize)]
#[command(name = "mmnpp", version, about = "Markov-modulated non-homogeneous Poisson processes")]
pub struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
pub enum Command {
    /// Simulate claims and the hidden regime path.
    Simulate(SimulateArgs),
    /// Calibrate a model by EM.
    Fit(FitArgs),
    /// Per-claim regime probabilities and per-window expected counts.
    Decode(DecodeArgs),
    /// Increase the order until residuals look like white noise.
    SelectOrder(SelectOrderArgs),
    /// Residual tests for a fitted model.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub exposure: PathBuf,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub exposure: PathBuf,
    /// End of observation; defaults to the last claim time.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Spread claims recorded per day evenly within the day.
    #[arg(long)]
    pub spread_daily: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopArg {
    Loglik,
    Params,
}

#[derive(Debug, Args, Serialize)]
pub struct FitControl {
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "loglik")]
    pub stop: StopArg,
}

impl FitControl {
    fn options(&self) -> FitOptions {
        FitOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            stop: match self.stop {
                StopArg::Loglik => StopRule::LogLikelihood,
                StopArg::Params => StopRule::Parameters,
            },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Number of regimes; taken from `--init` when omitted.
    #[arg(long)]
    pub order: Option<usize>,
    /// Starting model JSON.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub control: FitControl,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Residual window width.
    #[arg(long, default_value_t = 1.0)]
    pub window: f64,
    #[arg(long, value_enum, default_value = "predictive")]
    pub basis: BasisArg,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectOrderArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1.0)]
    pub window: f64,
    #[arg(long, value_enum, default_value = "predictive")]
    pub basis: BasisArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10)]
    pub max_order: usize,
    #[arg(long, default_value_t = 2)]
    pub start_order: usize,
    /// Skip the order-1 dispersion / runs pre-check.
    #[arg(long)]
    pub no_evidence_check: bool,
    #[arg(long, default_value_t = 1.2)]
    pub dispersion_threshold: f64,
    #[arg(long, default_value_t = 0.05)]
    pub runs_alpha: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub control: FitControl,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Conditioning of the per-window expected counts.
#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisArg {
    /// Claims before each window.
    Predictive,
    /// All claims.
    Smoothed,
}

impl From<BasisArg> for ResidualBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Predictive => ResidualBasis::Predictive,
            BasisArg::Smoothed => ResidualBasis::Smoothed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterArg {
    Zero,
    Median,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub window: f64,
    #[arg(long, value_enum, default_value = "predictive")]
    pub basis: BasisArg,
    /// Ljung-Box lags.
    #[arg(long, value_delimiter = ',', default_values_t = [91usize, 182, 365])]
    pub lags: Vec<usize>,
    #[arg(long, value_enum, default_value = "zero")]
    pub center: CenterArg,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// EM stopped at `max_iter` without meeting the tolerance.
    NotConverged,
}

struct Data {
    claims: Vec<f64>,
    gamma: ExposureStepFunction,
    events: EventSequence,
}

fn load_data(args: &DataArgs) -> Result<Data> {
    let mut claims = io::read_events_file(&args.events)?;
    if args.spread_daily {
        claims = io::spread_daily(&claims);
    }
    let horizon = match args.horizon {
        Some(h) => h,
        None => claims.last().copied().ok_or(Error::SeriesTooShort { len: 0, needed: 1 })?,
    };
    let gamma = io::read_exposure_file(&args.exposure, horizon)?;
    let events = EventSequence::build(&claims, &gamma)?;
    Ok(Data { claims, gamma, events })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write_manifest(cli: &Cli, dir: &Path, outputs: &[&str], extra: Value) -> Result<()> {
    let manifest = json!({
        "tool": "mmnpp",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cli.seed,
        "threads": cli.threads,
        "config": &cli.command,
        "outputs": outputs,
        "result": extra,
    });
    io::write_json_file(&dir.join("manifest.json"), &manifest)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<Outcome> {
    let params = io::read_model_file(&a.model)?;
    let gamma = io::read_exposure_file(&a.exposure, a.horizon)?;
    let out = simulate_mmnpp(&SimulationConfig { params, gamma, seed: cli.seed })?;
    ensure_dir(&a.out)?;
    io::write_events_file(&a.out.join("events.csv"), &out.claims)?;
    io::write_regimes_file(&a.out.join("regimes.csv"), &out.path)?;
    write_manifest(
        cli,
        &a.out,
        &["events.csv", "regimes.csv"],
        json!({ "claims": out.claims.len(), "regimeChanges": out.path.changes(), "jittered": out.jittered }),
    )?;
    Ok(Outcome::Done)
}

fn fit_cmd(cli: &Cli, a: &FitArgs) -> Result<Outcome> {
    let data = load_data(&a.data)?;
    let init = a.init.as_deref().map(io::read_model_file).transpose()?;
    let order = match (a.order, &init) {
        (Some(r), _) => r,
        (None, Some(p)) => p.order(),
        (None, None) => return Err(Error::DimensionMismatch("either --order or --init is required".into())),
    };
    let f = fit(&data.events, &data.gamma, order, init.as_ref(), &a.control.options())?;
    ensure_dir(&a.out)?;
    io::write_model_file(&a.out.join("model.json"), &f.params)?;
    io::write_json_file(&a.out.join("fit_report.json"), &FitReport::from(&f))?;
    write_manifest(
        cli,
        &a.out,
        &["model.json", "fit_report.json"],
        json!({ "loglik": f.final_loglik(), "iterations": f.iterations, "converged": f.converged }),
    )?;
    if !f.converged {
        log::warn!("EM did not converge within {} iterations", a.control.max_iter);
        return Ok(Outcome::NotConverged);
    }
    Ok(Outcome::Done)
}

fn claim_rows(series: &StateProbabilitySeries) -> StateProbabilitySeries {
    let (times, probs) = series.claims().map(|(t, p)| (t, p.to_vec())).unzip();
    StateProbabilitySeries { kinds: vec![crate::calibrate::StepKind::Claim; series.claims().count()], times, probs }
}

fn window_table(data: &Data, params: &crate::ModelParams, window: f64, basis: BasisArg) -> Result<(Vec<WindowRow>, f64)> {
    let rec = forward_backward(params, &data.events)?;
    let grid = WindowGrid::uniform(data.gamma.horizon(), window)?;
    let observed = grid.observed_counts(&data.claims);
    let expected = window_expectations(params, &rec, &data.gamma, &grid, basis.into())?;
    Ok((io::window_rows(grid.starts(), &observed, &expected), rec.log_likelihood()))
}

fn write_windows_file(path: &Path, rows: &[WindowRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    io::write_windows(f, rows)
}

fn decode_cmd(cli: &Cli, a: &DecodeArgs) -> Result<Outcome> {
    let data = load_data(&a.data)?;
    let params = io::read_model_file(&a.model)?;
    let rec = forward_backward(&params, &data.events)?;
    let series = claim_rows(&smoothed_probs(&rec));
    let states = most_likely_regimes(&series);
    let (rows, _) = window_table(&data, &params, a.window, a.basis)?;
    ensure_dir(&a.out)?;
    let f = std::fs::File::create(a.out.join("states.csv"))?;
    io::write_state_probs(f, &series, &states)?;
    write_windows_file(&a.out.join("windows.csv"), &rows)?;
    write_manifest(cli, &a.out, &["states.csv", "windows.csv"], json!({ "loglik": rec.log_likelihood() }))?;
    Ok(Outcome::Done)
}

fn select_order_cmd(cli: &Cli, a: &SelectOrderArgs) -> Result<Outcome> {
    let data = load_data(&a.data)?;
    let grid = WindowGrid::uniform(data.gamma.horizon(), a.window)?;
    let opts = OrderSelectionOptions {
        alpha: a.alpha,
        max_order: a.max_order,
        start_order: a.start_order,
        evidence_check: !a.no_evidence_check,
        dispersion_threshold: a.dispersion_threshold,
        runs_alpha: a.runs_alpha,
        basis: a.basis.into(),
        fit: a.control.options(),
    };
    let sel = select_order(&data.events, &data.gamma, &grid, &opts)?;
    if sel.exhausted {
        log::warn!("residuals still reject white noise at order {}", sel.chosen_order);
    }
    let chosen = sel.fits.last().expect("at least one fit");
    let (rows, _) = window_table(&data, &chosen.params, a.window, a.basis)?;
    ensure_dir(&a.out)?;
    let report = json!({
        "chosenOrder": sel.chosen_order,
        "whiteNoiseReached": !sel.exhausted,
        "alpha": a.alpha,
        "evidence": sel.evidence,
        "orders": sel.reports,
        "fits": sel.fits.iter().map(FitReport::from).collect::<Vec<_>>(),
    });
    io::write_json_file(&a.out.join("select_order.json"), &report)?;
    io::write_model_file(&a.out.join("model.json"), &chosen.params)?;
    write_windows_file(&a.out.join("residuals.csv"), &rows)?;
    write_manifest(
        cli,
        &a.out,
        &["select_order.json", "model.json", "residuals.csv"],
        json!({ "chosenOrder": sel.chosen_order, "whiteNoiseReached": !sel.exhausted }),
    )?;
    Ok(Outcome::Done)
}

fn report_or_error(r: Result<TestReport>) -> Value {
    match r {
        Ok(rep) => serde_json::to_value(rep).expect("report serializes"),
        Err(e) => json!({ "error": e.kind(), "message": e.to_string() }),
    }
}

fn diagnose_cmd(cli: &Cli, a: &DiagnoseArgs) -> Result<Outcome> {
    let data = load_data(&a.data)?;
    if data.claims.is_empty() {
        return Err(Error::SeriesTooShort { len: 0, needed: 1 });
    }
    let params = io::read_model_file(&a.model)?;
    let (rows, loglik) = window_table(&data, &params, a.window, a.basis)?;
    let observed: Vec<f64> = rows.iter().map(|r| r.observed).collect();
    let expected: Vec<f64> = rows.iter().map(|r| r.expected).collect();
    let res = residuals(&observed, &expected);
    let center = match a.center {
        CenterArg::Zero => RunsCenter::Zero,
        CenterArg::Median => RunsCenter::Median,
    };
    let order = params.order();
    let disp = dispersion(&observed, &expected, free_parameters(order));
    let report = json!({
        "order": order,
        "windows": rows.len(),
        "loglik": loglik,
        "residuals": residual_summary(&res),
        "ljungBox": a.lags.iter().map(|&l| report_or_error(ljung_box(&res, l))).collect::<Vec<_>>(),
        "runs": report_or_error(runs_test(&res, center)),
        "bartlett": report_or_error(bartlett_b(&res)),
        "dispersion": match disp {
            Ok(d) => json!(d),
            Err(e) => json!({ "error": e.kind(), "message": e.to_string() }),
        },
        "informationCriteria": information_criteria(loglik, order, data.claims.len()),
    });
    ensure_dir(&a.out)?;
    io::write_json_file(&a.out.join("diagnostics.json"), &report)?;
    write_windows_file(&a.out.join("residuals.csv"), &rows)?;
    write_manifest(cli, &a.out, &["diagnostics.json", "residuals.csv"], json!({ "loglik": loglik }))?;
    Ok(Outcome::Done)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Fit(a) => fit_cmd(cli, a),
        Command::Decode(a) => decode_cmd(cli, a),
        Command::SelectOrder(a) => select_order_cmd(cli, a),
        Command::Diagnose(a) => diagnose_cmd(cli, a),
    }
}

pub fn exit_code(result: &Result<Outcome>) -> u8 {
    match result {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::NotConverged) => 1,
        Err(e) if e.is_numerical() => 1,
        Err(_) => 2,
    }
}

/// Entry point of the `mmnpp` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
    }
    ExitCode::from(exit_code(&result))
}
