//! File formats: CSV for series, JSON for models and reports.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrate::{EStepEstimators, FitResult};
use crate::decode::StateProbabilitySeries;
use crate::error::{Error, Result};
use crate::exposure::ExposureStepFunction;
use crate::model::{ModelFile, ModelParams, RegimePath};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Parse { line: 0, message: format!("{}: {e}", path.display()) })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse { line, message: e.to_string() }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers().map_err(csv_err)?;
    let got: Vec<&str> = h.iter().map(str::trim).collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::Parse { line: 1, message: format!("expected header `{}`", expected.join(",")) });
    }
    Ok(())
}

fn parse_rows(rdr: &mut csv::Reader<impl Read>, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() < width {
            return Err(Error::Parse { line, message: format!("expected {width} fields") });
        }
        let row = (0..width)
            .map(|i| {
                rec[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("`{}` is not a finite number", &rec[i]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads the float columns named by `header`, reporting the line of any bad field.
fn read_float_rows(reader: impl Read, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, header)?;
    parse_rows(&mut rdr, header.len())
}

/// Claim times from a CSV with header `time`; returned sorted.
pub fn read_events(reader: impl Read) -> Result<Vec<f64>> {
    let mut t: Vec<f64> = read_float_rows(reader, &["time"])?.into_iter().map(|r| r[0]).collect();
    t.sort_by(f64::total_cmp);
    Ok(t)
}

pub fn read_events_file(path: &Path) -> Result<Vec<f64>> {
    read_events(open(path)?)
}

pub fn write_events(writer: impl Write, times: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time"]).map_err(csv_err)?;
    for t in times {
        w.write_record([t.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_file(path: &Path, times: &[f64]) -> Result<()> {
    write_events(create(path)?, times)
}

/// Exposure from a CSV with header `start_time,value`. The horizon is not
/// part of the file.
pub fn read_exposure(reader: impl Read, horizon: f64) -> Result<ExposureStepFunction> {
    let rows = read_float_rows(reader, &["start_time", "value"])?;
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, message: "exposure file has no rows".into() });
    }
    let (starts, values) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    ExposureStepFunction::new(starts, values, horizon)
}

pub fn read_exposure_file(path: &Path, horizon: f64) -> Result<ExposureStepFunction> {
    read_exposure(open(path)?, horizon)
}

pub fn write_exposure(writer: impl Write, gamma: &ExposureStepFunction) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["start_time", "value"]).map_err(csv_err)?;
    for (s, v) in gamma.starts().iter().zip(gamma.values()) {
        w.write_record([s.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_exposure_file(path: &Path, gamma: &ExposureStepFunction) -> Result<()> {
    write_exposure(create(path)?, gamma)
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse { line: e.line(), message: e.to_string() }
}

pub fn read_model(reader: impl Read) -> Result<ModelParams> {
    let f: ModelFile = serde_json::from_reader(reader).map_err(json_err)?;
    f.try_into()
}

pub fn read_model_file(path: &Path) -> Result<ModelParams> {
    read_model(open(path)?)
}

pub fn write_model(writer: impl Write, params: &ModelParams) -> Result<()> {
    write_json(writer, &ModelFile::from(params))
}

pub fn write_model_file(path: &Path, params: &ModelParams) -> Result<()> {
    write_model(create(path)?, params)
}

pub fn write_json<T: Serialize>(mut writer: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(writer)?;
    Ok(())
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(create(path)?, value)
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(json_err)
}

/// Regime path as `start_time,state` with 1-based states.
pub fn write_regimes(writer: impl Write, path: &RegimePath) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["start_time", "state"]).map_err(csv_err)?;
    for (t, s) in path.jump_times().iter().zip(path.states()) {
        w.write_record([t.to_string(), (s + 1).to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_regimes_file(path: &Path, regimes: &RegimePath) -> Result<()> {
    write_regimes(create(path)?, regimes)
}

pub fn read_regimes(reader: impl Read, horizon: f64) -> Result<RegimePath> {
    let rows = read_float_rows(reader, &["start_time", "state"])?;
    let mut times = Vec::with_capacity(rows.len());
    let mut states = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r[1] < 1.0 || r[1].fract() != 0.0 {
            return Err(Error::Parse { line: i + 2, message: format!("state `{}` is not a positive integer", r[1]) });
        }
        times.push(r[0]);
        states.push(r[1] as usize - 1);
    }
    RegimePath::new(times, states, horizon)
}

pub fn read_regimes_file(path: &Path, horizon: f64) -> Result<RegimePath> {
    read_regimes(open(path)?, horizon)
}

/// Fit report JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub loglik: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(flatten)]
    pub estimators: EStepEstimators,
}

impl From<&FitResult> for FitReport {
    fn from(f: &FitResult) -> Self {
        FitReport {
            loglik: f.loglik.clone(),
            iterations: f.iterations,
            converged: f.converged,
            estimators: f.estimators.clone(),
        }
    }
}

/// Per-event decode table `time,state,prob_1..prob_r`, states 1-based.
pub fn write_state_probs(writer: impl Write, series: &StateProbabilitySeries, states: &[usize]) -> Result<()> {
    let r = series.probs.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "state".to_string()];
    header.extend((1..=r).map(|i| format!("prob_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for ((t, p), s) in series.times.iter().zip(&series.probs).zip(states) {
        let mut row = vec![t.to_string(), (s + 1).to_string()];
        row.extend(p.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a per-event decode table back as `(time, 0-based state, probabilities)`.
pub fn read_state_probs(reader: impl Read) -> Result<Vec<(f64, usize, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let h = rdr.headers().map_err(csv_err)?.clone();
    if h.len() < 3 || &h[0] != "time" || &h[1] != "state" {
        return Err(Error::Parse { line: 1, message: "expected header `time,state,prob_1..`".into() });
    }
    let mut out = Vec::new();
    for (i, row) in parse_rows(&mut rdr, h.len())?.into_iter().enumerate() {
        if row[1] < 1.0 {
            return Err(Error::Parse { line: i + 2, message: "state must be 1-based".into() });
        }
        out.push((row[0], row[1] as usize - 1, row[2..].to_vec()));
    }
    Ok(out)
}

/// One row of the per-window table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_start: f64,
    pub observed: f64,
    pub expected: f64,
    pub residual: f64,
}

pub fn window_rows(starts: &[f64], observed: &[f64], expected: &[f64]) -> Vec<WindowRow> {
    starts
        .iter()
        .zip(observed)
        .zip(expected)
        .map(|((&window_start, &observed), &expected)| WindowRow {
            window_start,
            observed,
            expected,
            residual: observed - expected,
        })
        .collect()
}

pub fn write_windows(writer: impl Write, rows: &[WindowRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record(["window_start", "observed", "expected", "residual"]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_windows(reader: impl Read) -> Result<Vec<WindowRow>> {
    let rows = read_float_rows(reader, &["window_start", "observed", "expected", "residual"])?;
    Ok(rows
        .into_iter()
        .map(|r| WindowRow { window_start: r[0], observed: r[1], expected: r[2], residual: r[3] })
        .collect())
}

/// Spreads claims recorded at day resolution evenly inside each day:
/// the `j`-th of `c` claims on day `d` is placed at `d + (j + ½)/c`.
pub fn spread_daily(times: &[f64]) -> Vec<f64> {
    let mut days: Vec<f64> = times.iter().map(|t| t.floor()).collect();
    days.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(days.len());
    let mut i = 0;
    while i < days.len() {
        let d = days[i];
        let c = days[i..].iter().take_while(|x| **x == d).count();
        out.extend((0..c).map(|j| d + (j as f64 + 0.5) / c as f64));
        i += c;
    }
    out
}
