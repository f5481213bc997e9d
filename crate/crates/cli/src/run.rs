use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use sstr_core::analytic::{self, RegimePoint};
use sstr_core::optimizer::{self, OptResult};
use sstr_core::simulator::{self, TrialRunner};
use sstr_core::Error;

use crate::spec::{Command, ExperimentSpec, Point, Target};
use crate::CliError;

pub const SWEEP_COLUMNS: [&str; 8] = [
    "sweep_value",
    "sstr_analytic",
    "sstr_mean_approx",
    "sstr_mc",
    "mc_half_width",
    "p_miss_at_kbar",
    "ser_at_kbar",
    "runtime_s",
];

pub const OPTIMIZE_COLUMNS: [&str; 9] = [
    "sweep_value",
    "epsilon_opt",
    "L_opt",
    "value",
    "method",
    "restarts",
    "iterations",
    "converged",
    "runtime_s",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Fill `runtime_s`; off by default so repeated runs are byte-identical.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Output {
    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| CliError::Io {
            path: "<csv buffer>".into(),
            source: e.into_error(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub spec_sha256: String,
    pub rows: usize,
    pub columns: Vec<&'static str>,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec, spec_bytes: &[u8], output: &Output) -> Self {
        let digest = Sha256::digest(spec_bytes);
        Manifest {
            tool: "sstr",
            version: env!("CARGO_PKG_VERSION"),
            command: spec.command.name(),
            seed: spec.config.seed,
            spec_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            rows: output.rows.len(),
            columns: output.header.clone(),
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn execute(spec: &ExperimentSpec, opts: &ExecOptions) -> Result<Output, CliError> {
    let points = spec.points()?;
    let mut rows = Vec::with_capacity(points.len());
    for point in &points {
        let start = Instant::now();
        let mut row = match spec.command {
            Command::Optimize => optimize_row(spec, point)?,
            _ => sweep_row(spec, point)?,
        };
        row.push(if opts.timing {
            format!("{:.6}", start.elapsed().as_secs_f64())
        } else {
            String::new()
        });
        rows.push(row);
    }
    let header = match spec.command {
        Command::Optimize => OPTIMIZE_COLUMNS.to_vec(),
        _ => SWEEP_COLUMNS.to_vec(),
    };
    Ok(Output { header, rows })
}

fn sweep_row(spec: &ExperimentSpec, p: &Point) -> Result<Vec<String>, CliError> {
    let cfg = &p.config;
    let bf = spec.beamformer;
    let mut row = vec![opt_num(p.sweep_value)];

    if spec.command.analyses() {
        match spec.k {
            Some(k) => {
                let regime = RegimePoint {
                    k: k as f64,
                    pilot_len: p.pilot_len,
                    epsilon: p.epsilon,
                    beamformer: bf,
                };
                row.push(num(regime.per_user_rate(cfg)));
                row.push(String::new());
            }
            None => {
                row.push(num(analytic::sstr_exact(p.pilot_len, p.epsilon, cfg, bf)?.value));
                row.push(match analytic::sstr_mean_approx(p.pilot_len, p.epsilon, cfg, bf) {
                    Ok(point) => num(point.value),
                    Err(Error::DegenerateDistribution { .. }) => num(0.0),
                    Err(e) => return Err(e.into()),
                });
            }
        }
    } else {
        row.extend([String::new(), String::new()]);
    }

    if spec.command.simulates() {
        let (value, half_width) = match spec.k {
            Some(k) => {
                let batch = TrialRunner::conditioned(cfg, p.pilot_len, k)?.run_batch(spec.trials, &[bf])?;
                let rate = simulator::conditional_rate(&batch[0], cfg.coherence)?;
                (rate.value, rate.half_width)
            }
            None => {
                let batch = TrialRunner::new(cfg, p.pilot_len, p.epsilon)?.run_batch(spec.trials, &[bf])?;
                let point = simulator::empirical_sstr(&batch[0], cfg.coherence)?;
                (point.value, point.half_width)
            }
        };
        row.extend([num(value), num(half_width)]);
    } else {
        row.extend([String::new(), String::new()]);
    }

    let kbar = match spec.k {
        Some(k) => Some(k as f64),
        None => match analytic::k_bar(p.pilot_len, cfg.users, cfg.activation_probability(p.epsilon)) {
            Ok(k) => Some(k),
            Err(Error::DegenerateDistribution { .. }) => None,
            Err(e) => return Err(e.into()),
        },
    };
    match kbar {
        Some(k) => {
            let regime = RegimePoint {
                k,
                pilot_len: p.pilot_len,
                epsilon: p.epsilon,
                beamformer: bf,
            };
            row.extend([num(regime.miss_probability(cfg)), num(regime.ser(cfg))]);
        }
        None => row.extend([String::new(), String::new()]),
    }
    Ok(row)
}

fn optimize_row(spec: &ExperimentSpec, p: &Point) -> Result<Vec<String>, CliError> {
    let cfg = &p.config;
    let bf = spec.beamformer;
    let result: OptResult = match spec.target {
        Target::Epsilon if spec.use_grid => optimizer::optimize_epsilon_grid(p.pilot_len, cfg, bf, spec.grid_size)?,
        Target::Epsilon => optimizer::optimize_epsilon_cgp(p.pilot_len, cfg, bf, spec.restarts)?,
        Target::PilotLen => optimizer::optimize_length(p.epsilon, cfg, bf, spec.mean_approx)?,
        Target::Joint => optimizer::optimize_joint(cfg, bf, spec.restarts)?,
    };
    Ok(vec![
        opt_num(p.sweep_value),
        num(result.epsilon),
        result.pilot_len.to_string(),
        num(result.value),
        result.method.name().to_string(),
        result.diagnostics.restarts.to_string(),
        result.diagnostics.iterations.to_string(),
        result.diagnostics.converged.to_string(),
    ])
}
