//! Demand CSV, holiday list and the plot-ready output files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use imbal_core::groupform::{GroupFormation, SplitRecord};
use imbal_core::predictor::PredictionError;
use imbal_core::scengen::ScenarioSet;
use imbal_core::simulator::{SimulationTrace, SweepPoint};
use imbal_core::{Calendar, DemandSeries};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{}: customer {customer}: gap in timestamps, missing {missing} (next row at {found})", path.display())]
    Gap {
        path: PathBuf,
        customer: String,
        missing: NaiveDateTime,
        found: NaiveDateTime,
    },
    #[error("{}: {msg}", path.display())]
    Invalid { path: PathBuf, msg: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

const TIMESTAMP_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"];
const TIMESTAMP_OUT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn load_demand_csv(path: &Path) -> Result<Vec<DemandSeries>, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    parse_demand_csv(file, path)
}

/// Parse `timestamp,customer_id,kwh` rows. Customers keep the order of their
/// first appearance.
pub fn parse_demand_csv(reader: impl Read, path: &Path) -> Result<Vec<DemandSeries>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let parse_err = |line: u64, msg: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let expected = ["timestamp", "customer_id", "kwh"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(1, format!("expected header `timestamp,customer_id,kwh`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(u64, NaiveDateTime, f64)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let ts = parse_timestamp(&record[0]).ok_or_else(|| parse_err(line, format!("bad timestamp `{}`", &record[0])))?;
        let id = record[1].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty customer_id".into()));
        }
        let kwh: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad kwh `{}`", &record[2])))?;
        if !kwh.is_finite() || kwh < 0.0 {
            return Err(parse_err(line, format!("kwh must be finite and >= 0, got {kwh}")));
        }
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((line, ts, kwh));
    }
    if order.is_empty() {
        return Err(IoError::Invalid {
            path: path.to_path_buf(),
            msg: "no data rows".into(),
        });
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let r = &rows[&id];
        let step = if r.len() >= 2 {
            let d = r[1].1 - r[0].1;
            if d.num_seconds() <= 0 {
                return Err(parse_err(r[1].0, format!("customer {id}: timestamps not increasing")));
            }
            d
        } else {
            chrono::Duration::minutes(imbal_core::series::DEFAULT_GRANULARITY_MINUTES as i64)
        };
        for pair in r.windows(2) {
            let (_, a, _) = pair[0];
            let (line, b, _) = pair[1];
            let d = b - a;
            if d == step {
                continue;
            }
            if d.num_seconds() > 0 && d.num_seconds() % step.num_seconds() == 0 {
                return Err(IoError::Gap {
                    path: path.to_path_buf(),
                    customer: id.clone(),
                    missing: a + step,
                    found: b,
                });
            }
            return Err(parse_err(line, format!("customer {id}: non-uniform or non-increasing timestamp {b}")));
        }
        let minutes = step.num_minutes();
        if step.num_seconds() % 60 != 0 || minutes <= 0 || minutes > 24 * 60 {
            return Err(parse_err(r[0].0, format!("customer {id}: unsupported granularity {step}")));
        }
        let values = r.iter().map(|x| x.2).collect();
        let series = DemandSeries::new(id.clone(), r[0].1, minutes as u32, values).map_err(|e| IoError::Invalid {
            path: path.to_path_buf(),
            msg: format!("customer {id}: {e}"),
        })?;
        out.push(series);
    }
    Ok(out)
}

pub fn demand_csv(fleet: &[DemandSeries]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["timestamp", "customer_id", "kwh"]).expect("in-memory write");
    for s in fleet {
        for (i, v) in s.values().iter().enumerate() {
            let ts = s.timestamp(i).format(TIMESTAMP_OUT).to_string();
            w.write_record([ts.as_str(), s.customer_id(), &v.to_string()])
                .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

/// One ISO date per line; blank lines and `#` comments are skipped.
pub fn parse_holidays(text: &str, path: &Path) -> Result<Calendar, IoError> {
    let mut days = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let d = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|_| IoError::Parse {
            path: path.to_path_buf(),
            line: n as u64 + 1,
            msg: format!("bad date `{line}`"),
        })?;
        days.push(d);
    }
    Ok(Calendar::new(days))
}

pub fn load_holidays(path: &Path) -> Result<Calendar, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_holidays(&text, path)
}

/// Write through a temporary file in the target directory and rename it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.flush().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

fn csv_bytes<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

pub fn groups_json(formation: &GroupFormation) -> Vec<u8> {
    json_bytes(&formation.groups)
}

/// Retained MCMC draws of one split, `draw,tau,lambda1,lambda2`.
pub fn posterior_csv(split: &SplitRecord) -> Vec<u8> {
    let s = &split.samples;
    csv_bytes(
        ["draw", "tau", "lambda1", "lambda2"],
        (0..s.tau.len()).map(|i| {
            [
                i.to_string(),
                (s.tau[i] + split.start - 1).to_string(),
                s.lambda1[i].to_string(),
                s.lambda2[i].to_string(),
            ]
        }),
    )
}

pub fn posterior_file_name(split: &SplitRecord) -> String {
    format!("posterior_{}_{}.csv", split.start, split.end)
}

pub fn trace_csv(trace: &SimulationTrace) -> Vec<u8> {
    csv_bytes(
        ["period", "sp", "dm", "pred", "p", "soc", "im", "ic", "cum_ic"],
        trace.rows.iter().map(|r| {
            [
                r.period.to_string(),
                r.sp.to_string(),
                r.dm.to_string(),
                r.pred.to_string(),
                r.p.to_string(),
                r.soc.to_string(),
                r.im.to_string(),
                r.ic.to_string(),
                r.cum_ic.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: String,
    pub total_cost: f64,
    pub basic_cost: f64,
    pub reduction_pct: f64,
    pub battery_capacity_kwh: f64,
    pub threshold_kwh: f64,
    pub periods: usize,
    pub nodes: usize,
    pub lp_iterations: usize,
    /// Wall-clock seconds; `null` unless timing is enabled.
    pub runtime_s: Option<f64>,
}

impl Summary {
    pub fn from_trace(trace: &SimulationTrace, runtime_s: Option<f64>) -> Self {
        Self {
            mode: trace.mode.name().to_string(),
            total_cost: trace.total_cost,
            basic_cost: trace.basic_cost,
            reduction_pct: trace.reduction_pct(),
            battery_capacity_kwh: trace.battery.capacity_kwh,
            threshold_kwh: trace.threshold_kwh,
            periods: trace.rows.len(),
            nodes: trace.nodes,
            lp_iterations: trace.lp_iterations,
            runtime_s,
        }
    }
}

pub fn summary_json(summary: &Summary) -> Vec<u8> {
    json_bytes(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub basic_cost: f64,
    pub capacities_kwh: Vec<f64>,
    pub pct_of_basic: Vec<f64>,
    pub runtime_s: Option<f64>,
}

pub fn sweep_csv(points: &[SweepPoint]) -> Vec<u8> {
    csv_bytes(
        ["capacity_kwh", "pct_of_basic"],
        points.iter().map(|p| [p.capacity_kwh.to_string(), p.pct_of_basic.to_string()]),
    )
}

pub fn sweep_json(summary: &SweepSummary) -> Vec<u8> {
    json_bytes(summary)
}

/// Reduced scenario perturbations, `scenario_id,lag,perturbation_kwh`.
pub fn scenario_csv(set: &ScenarioSet) -> Vec<u8> {
    let pert = set.perturbations();
    csv_bytes(
        ["scenario_id", "lag", "perturbation_kwh"],
        pert.iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().map(move |(l, v)| [s.to_string(), l.to_string(), v.to_string()])),
    )
}

pub fn prediction_error_csv(errors: &[PredictionError]) -> Vec<u8> {
    csv_bytes(
        ["period", "lag", "actual", "predicted", "error"],
        errors.iter().map(|e| {
            [
                e.period.to_string(),
                e.lag.to_string(),
                e.actual.to_string(),
                e.predicted.to_string(),
                e.error().to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests;
