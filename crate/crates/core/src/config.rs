//! Experiment files.
//!
//! An experiment is a TOML document with a few top-level keys and a
//! `[channel]` table:
//!
//! ```toml
//! command = "sweep"        # stability | sweep | moments | graphs | rate | neff
//! trials = 2000
//! output = "out"
//! workers = 4              # optional; defaults to every core
//!
//! [channel]
//! n_tx = 32
//! n_rx = 2
//! pinholes = [32]          # one entry per pinhole layer
//! carrier = 10.0
//! bandwidth = 1.0
//! coherence_bw = 0.0625
//! symbol_interval = 4.0
//!
//! [sweep]
//! mode = "product"         # or "zip"
//! [[sweep.axes]]
//! parameter = "n_tx"
//! values = [8, 16, 32]
//!
//! [rate]                   # only read by the `rate` command
//! mc_lo = 0.1
//! mc_hi = 100.0
//! points = 31
//! powers = [100.0]
//! ```
//!
//! The regime is always derived from `bandwidth` and `coherence_bw`, never
//! stated. Parsing reports every violation it finds, not just the first.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::error::{Error, Result, Violation};
use crate::stability::MIN_TRIALS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Stability,
    Sweep,
    Moments,
    Graphs,
    Rate,
    Neff,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Stability,
        Command::Sweep,
        Command::Moments,
        Command::Graphs,
        Command::Rate,
        Command::Neff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Stability => "stability",
            Command::Sweep => "sweep",
            Command::Moments => "moments",
            Command::Graphs => "graphs",
            Command::Rate => "rate",
            Command::Neff => "neff",
        }
    }

    /// Whether the command draws random channels.
    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Command::Stability | Command::Sweep)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Cartesian product of the axes; the first axis varies slowest.
    #[default]
    Product,
    /// Axes advance together and must have equal length.
    Zip,
}

/// A sweep value: a number, or a list for `pinholes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Number(f64),
    List(Vec<usize>),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Number(x) => write!(f, "{x}"),
            AxisValue::List(v) => {
                let s: Vec<String> = v.iter().map(|k| k.to_string()).collect();
                write!(f, "[{}]", s.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<AxisValue>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sweep {
    #[serde(default)]
    pub mode: SweepMode,
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
}

impl Sweep {
    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }
}

/// Channel fields a sweep axis may name.
pub const SWEEP_PARAMETERS: [&str; 12] = [
    "n_tx",
    "n_rx",
    "pinholes",
    "carrier",
    "bandwidth",
    "coherence_bw",
    "symbol_interval",
    "n_symbols",
    "symbol_mag",
    "noise_power",
    "tx_power",
    "seed",
];

fn count(parameter: &str, v: &AxisValue) -> std::result::Result<usize, Violation> {
    match v {
        AxisValue::Number(x) if *x >= 0.0 && x.fract() == 0.0 && *x < 1e15 => Ok(*x as usize),
        _ => Err(Violation::Malformed {
            key: format!("sweep.{parameter}"),
            reason: format!("{v} is not a non-negative integer"),
        }),
    }
}

fn number(parameter: &str, v: &AxisValue) -> std::result::Result<f64, Violation> {
    match v {
        AxisValue::Number(x) => Ok(*x),
        AxisValue::List(_) => Err(Violation::Malformed {
            key: format!("sweep.{parameter}"),
            reason: format!("{v} is not a number"),
        }),
    }
}

/// Sets one named channel field.
pub fn apply_axis(cfg: &mut ChannelConfig, parameter: &str, value: &AxisValue) -> std::result::Result<(), Violation> {
    match parameter {
        "n_tx" => cfg.n_tx = count(parameter, value)?,
        "n_rx" => cfg.n_rx = count(parameter, value)?,
        "n_symbols" => cfg.n_symbols = Some(count(parameter, value)?),
        "seed" => cfg.seed = count(parameter, value)? as u64,
        "pinholes" => match value {
            AxisValue::List(v) => cfg.pinholes = v.clone(),
            AxisValue::Number(_) => {
                return Err(Violation::Malformed {
                    key: "sweep.pinholes".into(),
                    reason: "values must be lists of layer sizes".into(),
                })
            }
        },
        "carrier" => cfg.carrier = number(parameter, value)?,
        "bandwidth" => cfg.bandwidth = number(parameter, value)?,
        "coherence_bw" => cfg.coherence_bw = number(parameter, value)?,
        "symbol_interval" => cfg.symbol_interval = number(parameter, value)?,
        "symbol_mag" => cfg.symbol_mag = number(parameter, value)?,
        "noise_power" => cfg.noise_power = number(parameter, value)?,
        "tx_power" => cfg.tx_power = number(parameter, value)?,
        _ => return Err(Violation::UnknownSweepParameter(parameter.to_string())),
    }
    Ok(())
}

/// Grid for the `rate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    #[serde(default = "default_mc_lo")]
    pub mc_lo: f64,
    #[serde(default = "default_mc_hi")]
    pub mc_hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Transmit powers; empty means the channel's `tx_power`.
    #[serde(default)]
    pub powers: Vec<f64>,
}

fn default_mc_lo() -> f64 {
    0.1
}
fn default_mc_hi() -> f64 {
    100.0
}
fn default_points() -> usize {
    31
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec {
            mc_lo: default_mc_lo(),
            mc_hi: default_mc_hi(),
            points: default_points(),
            powers: Vec::new(),
        }
    }
}

fn default_trials() -> usize {
    2000
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A complete experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: Command,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub channel: ChannelConfig,
    #[serde(default, skip_serializing_if = "Sweep::is_empty")]
    pub sweep: Sweep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSpec>,
}

const REQUIRED_CHANNEL: [&str; 6] = ["n_tx", "n_rx", "carrier", "bandwidth", "coherence_bw", "symbol_interval"];

impl ExperimentSpec {
    pub fn new(command: Command, channel: ChannelConfig) -> Self {
        ExperimentSpec {
            command,
            trials: default_trials(),
            output: default_output(),
            workers: None,
            channel,
            sweep: Sweep::default(),
            rate: None,
        }
    }

    /// Channel configs visited by the sweep, with the axis values that
    /// produced each. A spec without axes yields the base config alone.
    pub fn sweep_points(&self) -> std::result::Result<Vec<(Vec<AxisValue>, ChannelConfig)>, Vec<Violation>> {
        let axes = &self.sweep.axes;
        if axes.is_empty() {
            return Ok(vec![(Vec::new(), self.channel.clone())]);
        }
        let mut errs = Vec::new();
        for a in axes {
            if !SWEEP_PARAMETERS.contains(&a.parameter.as_str()) {
                errs.push(Violation::UnknownSweepParameter(a.parameter.clone()));
            }
            if a.values.is_empty() {
                errs.push(Violation::Malformed {
                    key: format!("sweep.{}", a.parameter),
                    reason: "no values".into(),
                });
            }
        }
        let combos: Vec<Vec<usize>> = match self.sweep.mode {
            SweepMode::Zip => {
                let n = axes[0].values.len();
                for a in &axes[1..] {
                    if a.values.len() != n {
                        errs.push(Violation::SweepLength {
                            parameter: a.parameter.clone(),
                        });
                    }
                }
                (0..n).map(|i| vec![i; axes.len()]).collect()
            }
            SweepMode::Product => {
                let mut out = vec![Vec::new()];
                for a in axes {
                    out = out
                        .into_iter()
                        .flat_map(|p: Vec<usize>| {
                            (0..a.values.len()).map(move |i| {
                                let mut q = p.clone();
                                q.push(i);
                                q
                            })
                        })
                        .collect();
                }
                out
            }
        };
        if !errs.is_empty() {
            return Err(errs);
        }
        let mut points = Vec::with_capacity(combos.len());
        for idx in combos {
            let mut cfg = self.channel.clone();
            let mut vals = Vec::with_capacity(axes.len());
            for (a, &i) in axes.iter().zip(&idx) {
                let v = &a.values[i];
                if let Err(e) = apply_axis(&mut cfg, &a.parameter, v) {
                    push_unique(&mut errs, e);
                }
                vals.push(v.clone());
            }
            if let Err(vs) = cfg.validate() {
                for v in vs {
                    push_unique(&mut errs, v);
                }
            }
            points.push((vals, cfg));
        }
        if errs.is_empty() {
            Ok(points)
        } else {
            Err(errs)
        }
    }

    /// Every violation in the experiment, channel and sweep points included.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        if let Err(vs) = self.channel.validate() {
            v.extend(vs);
        }
        if self.command.is_monte_carlo() && self.trials < MIN_TRIALS {
            v.push(Violation::TooFewTrials {
                trials: self.trials,
                min: MIN_TRIALS,
            });
        }
        if self.workers == Some(0) {
            v.push(Violation::ZeroCount("workers"));
        }
        if let Err(vs) = self.sweep_points() {
            for x in vs {
                push_unique(&mut v, x);
            }
        }
        if let Some(r) = &self.rate {
            if !(r.mc_lo > 0.0 && r.mc_lo.is_finite()) {
                v.push(Violation::NonPositive("rate.mc_lo"));
            }
            if !(r.mc_hi > r.mc_lo && r.mc_hi.is_finite()) {
                v.push(Violation::Malformed {
                    key: "rate.mc_hi".into(),
                    reason: "must exceed rate.mc_lo".into(),
                });
            }
            if r.points < 2 {
                v.push(Violation::Malformed {
                    key: "rate.points".into(),
                    reason: "need at least 2 points".into(),
                });
            }
            if r.powers.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                v.push(Violation::NonPositive("rate.powers"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn validated(self) -> Result<Self> {
        self.validate().map_err(Error::Config)?;
        Ok(self)
    }
}

fn push_unique(v: &mut Vec<Violation>, x: Violation) {
    if !v.contains(&x) {
        v.push(x);
    }
}

/// Parses and validates an experiment file.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let table: toml::Table = toml::from_str(text).map_err(|e| {
        Error::Config(vec![Violation::Malformed {
            key: "<document>".into(),
            reason: e.message().to_string(),
        }])
    })?;
    let mut violations = Vec::new();
    if !table.contains_key("command") {
        violations.push(Violation::MissingKey("command".into()));
    }
    match table.get("channel") {
        Some(toml::Value::Table(ch)) => {
            for k in REQUIRED_CHANNEL {
                if !ch.contains_key(k) {
                    violations.push(Violation::MissingKey(format!("channel.{k}")));
                }
            }
        }
        Some(_) => violations.push(Violation::Malformed {
            key: "channel".into(),
            reason: "must be a table".into(),
        }),
        None => violations.push(Violation::MissingKey("channel".into())),
    }

    let mut unknown = Vec::new();
    let parsed: std::result::Result<ExperimentSpec, _> =
        serde_ignored::deserialize(toml::Value::Table(table), |path| unknown.push(path.to_string()));
    violations.extend(unknown.into_iter().map(Violation::UnknownKey));

    match parsed {
        Ok(spec) => {
            if let Err(vs) = spec.validate() {
                violations.extend(vs);
            }
            if violations.is_empty() {
                Ok(spec)
            } else {
                Err(Error::Config(violations))
            }
        }
        Err(e) => {
            // missing keys are already listed
            let msg = e.message().to_string();
            if !msg.starts_with("missing field") {
                violations.push(Violation::Malformed {
                    key: "<document>".into(),
                    reason: msg,
                });
            }
            Err(Error::Config(violations))
        }
    }
}

/// Canonical TOML rendering; `parse_config(&emit(s))` returns `s`.
pub fn emit(spec: &ExperimentSpec) -> String {
    toml::to_string(spec).expect("experiment spec serializes")
}
