use std::fmt;

use thiserror::Error;

/// A single configuration problem. Validation collects every violation in
/// one pass, so callers usually see a `Vec` of these.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownKey(String),
    MissingKey(String),
    Malformed { key: String, reason: String },
    NonPositive(&'static str),
    ZeroCount(&'static str),
    ZeroPinhole { layer: usize },
    VarianceCount { expected: usize, got: usize },
    BandwidthNotBelowCarrier { bandwidth: f64, carrier: f64 },
    SymbolIntervalTooShort { interval: f64, min: f64 },
    TooFewTrials { trials: usize, min: usize },
    UnknownSweepParameter(String),
    SweepLength { parameter: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownKey(k) => write!(f, "unknown key `{k}`"),
            Violation::MissingKey(k) => write!(f, "missing key `{k}`"),
            Violation::Malformed { key, reason } => write!(f, "malformed `{key}`: {reason}"),
            Violation::NonPositive(k) => write!(f, "`{k}` must be positive"),
            Violation::ZeroCount(k) => write!(f, "`{k}` must be at least 1"),
            Violation::ZeroPinhole { layer } => {
                write!(f, "pinhole layer {layer} has zero scatterers")
            }
            Violation::VarianceCount { expected, got } => write!(
                f,
                "expected {expected} stage variances (one per stage), got {got}"
            ),
            Violation::BandwidthNotBelowCarrier { bandwidth, carrier } => write!(
                f,
                "bandwidth {bandwidth} must be below the carrier frequency {carrier}"
            ),
            Violation::SymbolIntervalTooShort { interval, min } => write!(
                f,
                "symbol interval below (2B)⁻¹: {interval} < {min}"
            ),
            Violation::TooFewTrials { trials, min } => {
                write!(f, "{trials} trials requested, Monte Carlo needs at least {min}")
            }
            Violation::UnknownSweepParameter(p) => write!(f, "unknown sweep parameter `{p}`"),
            Violation::SweepLength { parameter } => write!(
                f,
                "zipped sweep axis `{parameter}` differs in length from the first axis"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join(.0))]
    Config(Vec<Violation>),
    #[error("frequency {omega} lies outside the simulated band [{lo}, {hi}]")]
    OutOfCoverage { omega: f64, lo: f64, hi: f64 },
    #[error("config fingerprint mismatch: {expected} vs {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("{stages} stages exceed the pairing enumeration limit of {max}")]
    Capacity { stages: usize, max: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
