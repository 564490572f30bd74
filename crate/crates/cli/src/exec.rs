//! Point evaluation, sweeps, searches and CSV output.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use cvqkd_core::channel::{effective_expectations, expectations_from_samples, read_samples_csv};
use cvqkd_core::linalg::C64;
use cvqkd_core::search::{optimize_scalar, ScalarOptimum};
use cvqkd_core::solver::keyrate::{keyrate, prepare_problem, run_protocol, SolveReport};
use cvqkd_core::solver::InteriorPoint;
use cvqkd_core::Error;

use crate::config::{Point, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    SolverFailed,
    Infeasible,
}

/// One CSV line. Outputs are empty on failed rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub distance_km: f64,
    pub xi: f64,
    pub eta: f64,
    pub alpha: f64,
    pub delta_a: f64,
    pub delta_p: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub eta_d: f64,
    pub nu_el: f64,
    #[serde(rename = "W")]
    pub w: Option<f64>,
    #[serde(rename = "C_num")]
    pub c_num: Option<f64>,
    pub delta_correction: Option<f64>,
    pub ec_cost: Option<f64>,
    pub sift_prob: Option<f64>,
    pub key_rate: Option<f64>,
    pub key_rate_clamped: Option<f64>,
    pub status: Status,
}

impl ResultRow {
    fn new(point: &Point, outcome: &cvqkd_core::Result<SolveReport>) -> Self {
        let ch = point.channel_model();
        let mut row = ResultRow {
            distance_km: point.channel.distance_km,
            xi: point.channel.xi,
            eta: ch.eta(),
            alpha: point.protocol.alpha,
            delta_a: point.protocol.delta_a,
            delta_p: point.protocol.delta_p,
            n: point.subspace_n,
            eta_d: point.protocol.detector.eta_d,
            nu_el: point.protocol.detector.nu_el,
            w: None,
            c_num: None,
            delta_correction: None,
            ec_cost: None,
            sift_prob: None,
            key_rate: None,
            key_rate_clamped: None,
            status: Status::SolverFailed,
        };
        match outcome {
            Ok(r) => {
                row.w = Some(r.weight);
                row.c_num = Some(r.c_num);
                row.delta_correction = Some(r.delta_correction);
                row.ec_cost = Some(r.ec_cost);
                row.sift_prob = Some(r.sift_prob);
                row.key_rate = Some(r.key_rate);
                row.key_rate_clamped = Some(r.key_rate.max(0.0));
                row.status = Status::Ok;
            }
            Err(e) => {
                log::warn!("point d={} km xi={} alpha={} delta_a={} failed: {e}", row.distance_km, row.xi, row.alpha, row.delta_a);
                if matches!(e, Error::Infeasible(_)) {
                    row.status = Status::Infeasible;
                }
            }
        }
        row
    }
}

pub fn evaluate(cfg: &RunConfig, point: &Point) -> ResultRow {
    let outcome = point
        .spec()
        .and_then(|spec| run_protocol(&spec, &point.channel_model(), point.subspace_n, &cfg.solver, &InteriorPoint::default()))
        .map(|(_, r)| r);
    ResultRow::new(point, &outcome)
}

pub fn run_single(cfg: &RunConfig) -> Vec<ResultRow> {
    vec![evaluate(cfg, &cfg.point())]
}

/// One row per grid value, in grid order regardless of scheduling.
pub fn run_sweep(cfg: &RunConfig) -> Vec<ResultRow> {
    let sweep = cfg.sweep.as_ref().expect("sweep mode");
    sweep.grid.par_iter().map(|&v| evaluate(cfg, &cfg.point_sweep(sweep.variable, v))).collect()
}

/// Golden-section search over one protocol parameter. Rows are the probes sorted by the variable.
pub fn run_optimize(cfg: &RunConfig) -> Result<(Vec<ResultRow>, ScalarOptimum), CliError> {
    let opt = cfg.optimize.as_ref().expect("optimize mode");
    let mut rows = Vec::new();
    let result = optimize_scalar(
        |x| {
            let row = evaluate(cfg, &cfg.point_optimize(opt.variable, x));
            let rate = row.key_rate.ok_or(());
            rows.push((x, row));
            rate
        },
        opt.interval[0],
        opt.interval[1],
        opt.tol,
    )
    .map_err(|e| CliError::Solve(e.to_string()))?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((rows.into_iter().map(|(_, r)| r).collect(), result))
}

/// Solve with per-signal expectations estimated from heterodyne sample files.
///
/// `files` holds one file per signal in signal order, or a single file for signal 0 whose
/// statistics stand in for every signal through the QPSK phase symmetry.
pub fn run_ingest(cfg: &RunConfig, files: &[impl AsRef<Path>]) -> Result<Vec<ResultRow>, CliError> {
    let point = cfg.point();
    let spec = point.spec().map_err(|e| CliError::Config(e.to_string()))?;
    let channel = point.channel_model();
    let d = spec.num_signals();
    if files.len() != 1 && files.len() != d {
        return Err(CliError::Config(format!("expected 1 or {d} sample files, got {}", files.len())));
    }
    let beta = channel.received_amplitudes(&spec.alpha);
    let mut exp_n = Vec::with_capacity(d);
    let mut exp_nsq = Vec::with_capacity(d);
    let mut cache: Option<(f64, f64)> = None;
    for i in 0..d {
        let (n, nsq) = if files.len() == 1 {
            match cache {
                Some(v) => v,
                None => *cache.insert(sample_expectations(files[0].as_ref(), beta[0])?),
            }
        } else {
            sample_expectations(files[i].as_ref(), beta[i])?
        };
        let (n, nsq) = effective_expectations(n, nsq, &spec.detector).map_err(|e| CliError::Data(e.to_string()))?;
        exp_n.push(n);
        exp_nsq.push(nsq);
    }
    let outcome = prepare_problem(&spec, &channel, point.subspace_n, &exp_n, &exp_nsq)
        .and_then(|problem| keyrate(&problem, &channel, &spec, &cfg.solver, &InteriorPoint::default()));
    Ok(vec![ResultRow::new(&point, &outcome)])
}

fn sample_expectations(path: &Path, beta: C64) -> Result<(f64, f64), CliError> {
    let samples = read_samples_csv(path).map_err(|e| match e {
        Error::Io(m) => CliError::Io(m),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })?;
    expectations_from_samples(&samples, beta).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_csv(rows: &[ResultRow], out: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
