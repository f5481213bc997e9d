//! Experiment files: flat `key = value` lines, `#` starts a comment.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use sstr_core::{Beamformer, SystemConfig, TauMode};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analytic,
    Simulate,
    Optimize,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analytic => "analytic",
            Command::Simulate => "simulate",
            Command::Optimize => "optimize",
            Command::Sweep => "sweep",
        }
    }

    pub fn simulates(self) -> bool {
        matches!(self, Command::Simulate | Command::Sweep)
    }

    pub fn analyses(self) -> bool {
        matches!(self, Command::Analytic | Command::Sweep)
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analytic" => Ok(Command::Analytic),
            "simulate" => Ok(Command::Simulate),
            "optimize" => Ok(Command::Optimize),
            "sweep" => Ok(Command::Sweep),
            _ => Err(format!("unknown command `{s}`")),
        }
    }
}

/// Parameters that may be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Users,
    Antennas,
    Coherence,
    PActive,
    Epsilon,
    PilotLen,
    SnrDb,
    PskOrder,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Users => "N",
            SweepParam::Antennas => "M",
            SweepParam::Coherence => "T",
            SweepParam::PActive => "p_a",
            SweepParam::Epsilon => "epsilon",
            SweepParam::PilotLen => "L",
            SweepParam::SnrDb => "snr_db",
            SweepParam::PskOrder => "W",
        }
    }

    fn is_integer(self) -> bool {
        matches!(
            self,
            SweepParam::Users | SweepParam::Antennas | SweepParam::Coherence | SweepParam::PilotLen | SweepParam::PskOrder
        )
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "N" => SweepParam::Users,
            "M" => SweepParam::Antennas,
            "T" => SweepParam::Coherence,
            "p_a" => SweepParam::PActive,
            "epsilon" => SweepParam::Epsilon,
            "L" => SweepParam::PilotLen,
            "snr_db" => SweepParam::SnrDb,
            "W" => SweepParam::PskOrder,
            _ => return Err(format!("`{s}` cannot be swept (use N, M, T, p_a, epsilon, L, snr_db or W)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// What the `optimize` command maximises over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Epsilon,
    PilotLen,
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    pub config: SystemConfig,
    pub snr_db: f64,
    pub epsilon: f64,
    pub pilot_len: usize,
    /// Condition every interval on exactly `k` active users.
    pub k: Option<usize>,
    pub beamformer: Beamformer,
    pub trials: usize,
    pub sweep: Option<Sweep>,
    pub output_path: Option<PathBuf>,
    pub target: Target,
    pub use_grid: bool,
    pub restarts: usize,
    pub grid_size: usize,
    pub mean_approx: bool,
}

/// One fully resolved sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub sweep_value: Option<f64>,
    pub config: SystemConfig,
    pub epsilon: f64,
    pub pilot_len: usize,
}

const KEYS: &[&str] = &[
    "command",
    "N",
    "M",
    "T",
    "p_a",
    "snr_db",
    "sigma2",
    "W",
    "epsilon",
    "L",
    "k",
    "beamformer",
    "trials",
    "sweep",
    "values",
    "output",
    "seed",
    "amp_iters",
    "amp_damping",
    "se_samples",
    "threshold",
    "tau_mode",
    "fixed_pilots",
    "optimize",
    "optimizer",
    "restarts",
    "grid_size",
    "mean_approx",
];

struct Entries {
    map: HashMap<String, (usize, String)>,
}

impl Entries {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse().map(Some).map_err(|e| CliError::Parse {
                line: *line,
                key: key.to_string(),
                message: format!("cannot parse `{raw}`: {e}"),
            }),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.0)
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}

#[derive(Debug)]
struct Flag(bool);

impl FromStr for Flag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_bool(s).map(Flag)
    }
}

#[derive(Debug)]
struct Mode(TauMode);

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "state_evolution" => Ok(Mode(TauMode::StateEvolution)),
            "empirical" => Ok(Mode(TauMode::Empirical)),
            _ => Err(format!("tau_mode `{s}` (use state_evolution or empirical)")),
        }
    }
}

/// `a, b, c` or an inclusive range `start:step:stop`.
fn parse_values(raw: &str) -> Result<Vec<f64>, String> {
    if raw.contains(':') {
        let parts: Vec<f64> = raw
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        let [start, step, stop] = parts[..] else {
            return Err("ranges are written start:step:stop".into());
        };
        if !(step > 0.0) || stop < start {
            return Err("range needs a positive step and stop >= start".into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    raw.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", p.trim())))
        .collect()
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec, CliError> {
    parse_spec_with(text, None)
}

/// Like [`parse_spec`], with `command` taking precedence over the file's `command` key.
pub fn parse_spec_with(text: &str, command: Option<Command>) -> Result<ExperimentSpec, CliError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Parse {
                line: line_no,
                key: line.to_string(),
                message: "expected `key = value`".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(CliError::Parse {
                line: line_no,
                key: key.to_string(),
                message: "unknown key".into(),
            });
        }
        if map.insert(key.to_string(), (line_no, value.to_string())).is_some() {
            return Err(CliError::Parse {
                line: line_no,
                key: key.to_string(),
                message: "key given twice".into(),
            });
        }
    }
    let e = Entries { map };

    let from_file: Option<Command> = e.get("command")?;
    let command = command.or(from_file).ok_or_else(|| CliError::Parse {
        line: 0,
        key: "command".into(),
        message: "missing required key".into(),
    })?;
    let defaults = SystemConfig::default();
    let sigma2 = e.get("sigma2")?.unwrap_or(1.0);
    let snr_db = e.get("snr_db")?.unwrap_or(10.0);
    let config = SystemConfig {
        users: e.get("N")?.unwrap_or(defaults.users),
        antennas: e.get("M")?.unwrap_or(defaults.antennas),
        coherence: e.get("T")?.unwrap_or(defaults.coherence),
        p_active: e.get("p_a")?.unwrap_or(defaults.p_active),
        sigma2,
        psk_order: e.get("W")?.unwrap_or(defaults.psk_order),
        amp_iters: e.get("amp_iters")?.unwrap_or(defaults.amp_iters),
        amp_damping: e.get("amp_damping")?.unwrap_or(defaults.amp_damping),
        se_samples: e.get("se_samples")?.unwrap_or(defaults.se_samples),
        seed: e.get("seed")?.unwrap_or(defaults.seed),
        detection_threshold: e.get("threshold")?.unwrap_or(defaults.detection_threshold),
        tau_mode: e.get::<Mode>("tau_mode")?.map_or(defaults.tau_mode, |m| m.0),
        fixed_pilots: e.get::<Flag>("fixed_pilots")?.is_some_and(|f| f.0),
        ..defaults
    }
    .with_snr_db(snr_db);

    let sweep = match e.get::<SweepParam>("sweep")? {
        None => {
            if e.map.contains_key("values") {
                return Err(CliError::Parse {
                    line: e.line("values"),
                    key: "values".into(),
                    message: "`values` without `sweep`".into(),
                });
            }
            None
        }
        Some(param) => {
            let values = match e.map.get("values") {
                Some((line, raw)) => parse_values(raw).map_err(|message| CliError::Parse {
                    line: *line,
                    key: "values".into(),
                    message,
                })?,
                None if param == SweepParam::PilotLen => (1..config.coherence).map(|l| l as f64).collect(),
                None => {
                    return Err(CliError::Parse {
                        line: e.line("sweep"),
                        key: "sweep".into(),
                        message: "sweep needs `values`".into(),
                    })
                }
            };
            if param.is_integer() {
                if let Some(v) = values.iter().find(|v| v.fract() != 0.0 || **v < 0.0) {
                    return Err(CliError::Parse {
                        line: e.line("values"),
                        key: "values".into(),
                        message: format!("{} takes non-negative integers, got {v}", param.key()),
                    });
                }
            }
            Some(Sweep { param, values })
        }
    };

    let target = match e.map.get("optimize").map(|(_, v)| v.as_str()) {
        None | Some("joint") => Target::Joint,
        Some("epsilon") => Target::Epsilon,
        Some("L") => Target::PilotLen,
        Some(other) => {
            return Err(CliError::Parse {
                line: e.line("optimize"),
                key: "optimize".into(),
                message: format!("`{other}` (use epsilon, L or joint)"),
            })
        }
    };
    let use_grid = match e.map.get("optimizer").map(|(_, v)| v.as_str()) {
        None | Some("cgp") => false,
        Some("grid") => true,
        Some(other) => {
            return Err(CliError::Parse {
                line: e.line("optimizer"),
                key: "optimizer".into(),
                message: format!("`{other}` (use cgp or grid)"),
            })
        }
    };

    let spec = ExperimentSpec {
        command,
        config,
        snr_db,
        epsilon: e.get("epsilon")?.unwrap_or(0.5),
        pilot_len: e.get("L")?.unwrap_or(110),
        k: e.get("k")?,
        beamformer: e.get("beamformer")?.unwrap_or(Beamformer::Mrc),
        trials: e.get("trials")?.unwrap_or(100),
        sweep,
        output_path: e.get::<String>("output")?.map(PathBuf::from),
        target,
        use_grid,
        restarts: e.get("restarts")?.unwrap_or(sstr_core::optimizer::DEFAULT_RESTARTS),
        grid_size: e.get("grid_size")?.unwrap_or(sstr_core::optimizer::DEFAULT_GRID),
        mean_approx: e.get::<Flag>("mean_approx")?.is_none_or(|f| f.0),
    };
    spec.points()?;
    Ok(spec)
}

fn out_of_range(field: &'static str, reason: String) -> CliError {
    CliError::Core(sstr_core::Error::OutOfRange { field, reason })
}

impl ExperimentSpec {
    /// Resolves and validates every sweep point (a single point without a sweep).
    pub fn points(&self) -> Result<Vec<Point>, CliError> {
        if self.command.simulates() && self.trials < 2 {
            return Err(out_of_range("trials", format!("{} < 2, no confidence interval", self.trials)));
        }
        if self.command == Command::Optimize && self.restarts == 0 {
            return Err(out_of_range("restarts", "need at least one restart".into()));
        }
        if self.command == Command::Optimize && self.grid_size < 3 {
            return Err(out_of_range("grid_size", format!("{} < 3", self.grid_size)));
        }
        let values: Vec<Option<f64>> = match &self.sweep {
            None => vec![None],
            Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
        };
        values.into_iter().map(|v| self.point(v)).collect()
    }

    fn point(&self, value: Option<f64>) -> Result<Point, CliError> {
        let mut config = self.config.clone();
        let mut epsilon = self.epsilon;
        let mut pilot_len = self.pilot_len;
        if let (Some(v), Some(s)) = (value, &self.sweep) {
            match s.param {
                SweepParam::Users => config.users = v as usize,
                SweepParam::Antennas => config.antennas = v as usize,
                SweepParam::Coherence => config.coherence = v as usize,
                SweepParam::PActive => config.p_active = v,
                SweepParam::Epsilon => epsilon = v,
                SweepParam::PilotLen => pilot_len = v as usize,
                SweepParam::SnrDb => config = config.with_snr_db(v),
                SweepParam::PskOrder => config.psk_order = v as usize,
            }
        }
        let config = config.validate()?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(out_of_range("epsilon", format!("{epsilon} is not a probability")));
        }
        let fixed_len = !(self.command == Command::Optimize && self.target != Target::Epsilon);
        if fixed_len && (pilot_len == 0 || pilot_len >= config.coherence) {
            return Err(out_of_range(
                "L",
                format!("pilot length {pilot_len} outside [1, {}]", config.coherence - 1),
            ));
        }
        if let Some(k) = self.k {
            if k == 0 || k > config.users {
                return Err(out_of_range("k", format!("{k} active users out of {}", config.users)));
            }
        }
        Ok(Point {
            sweep_value: value,
            config,
            epsilon,
            pilot_len,
        })
    }
}
