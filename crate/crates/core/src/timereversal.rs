//! Time-reversal retransmission: the received signal at the `M` receivers
//! and its ensemble mean.
//!
//! The receiver signal is
//!
//! ```text
//! S(t) = Σ_l ∫ e^{−iω(t−τ_l)} g(ω) H(ω) H†(ω) m(τ_l) dω
//! ```
//!
//! evaluated by midpoint quadrature on the frequency grid. Because `H` is
//! constant on each coherence bin, the quadrature collapses to
//! `S(t) = Σ_b G_b u_b(t)` with `G_b = H_b H_b†` and the channel-independent
//! weights `u_b(t) = Σ_l Σ_{f∈b} w_f g(ω_f) e^{−iω_f(t−τ_l)} m(τ_l)`. The
//! weights live in a [`SynthesisPlan`] so Monte Carlo loops only pay for the
//! Gram matrices.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{ChannelConfig, ChannelRealization, FrequencyGrid, SymbolPhases};
use crate::error::{Error, Result};
use crate::rng;

/// Gaussian pulse with power density `g²(ω) = (2π)^{−1/2} exp(−(ω−ω₀)²/(2B²))`.
#[derive(Debug, Clone, Copy)]
pub struct Pulse {
    pub carrier: f64,
    pub bandwidth: f64,
}

impl Pulse {
    pub fn from_config(cfg: &ChannelConfig) -> Self {
        Pulse {
            carrier: cfg.carrier,
            bandwidth: cfg.bandwidth,
        }
    }

    pub fn amplitude(&self, omega: f64) -> f64 {
        let d = omega - self.carrier;
        (2.0 * PI).powf(-0.25) * (-d * d / (4.0 * self.bandwidth * self.bandwidth)).exp()
    }

    pub fn power_density(&self, omega: f64) -> f64 {
        let a = self.amplitude(omega);
        a * a
    }

    /// `c_g = 2√π (2π)^{−1/4}`, so that `∫g = c_g·B`.
    pub fn envelope_constant() -> f64 {
        2.0 * PI.sqrt() * (2.0 * PI).powf(-0.25)
    }

    /// Closed form of `∫ g(ω) e^{−iωs} dω = c_g B e^{−iω₀s} e^{−B²s²}` over the whole line.
    pub fn transform(&self, s: f64) -> Complex64 {
        let b = self.bandwidth;
        let mag = Self::envelope_constant() * b * (-b * b * s * s).exp();
        Complex64::from_polar(mag, -self.carrier * s)
    }
}

/// `g(ω)` for the pulse configured in `cfg`.
pub fn pulse_amplitude(omega: f64, cfg: &ChannelConfig) -> f64 {
    Pulse::from_config(cfg).amplitude(omega)
}

/// `W` symbol vectors (one entry per receiver) at instants `τ_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    pub times: Vec<f64>,
    pub symbols: Vec<Vec<Complex64>>,
}

impl SymbolStream {
    pub fn new(times: Vec<f64>, symbols: Vec<Vec<Complex64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidInput("a symbol stream needs W ≥ 1".into()));
        }
        if times.len() != symbols.len() {
            return Err(Error::InvalidInput(format!(
                "{} symbol instants but {} symbol vectors",
                times.len(),
                symbols.len()
            )));
        }
        let m = symbols[0].len();
        if m == 0 || symbols.iter().any(|s| s.len() != m) {
            return Err(Error::InvalidInput("symbol vectors must share one non-zero length".into()));
        }
        Ok(SymbolStream { times, symbols })
    }

    /// The stream configured by `cfg`: instants `τ_l = lτ`, `l = 1..W`,
    /// magnitude `μ`, equal or seeded random phases.
    pub fn from_config(cfg: &ChannelConfig) -> Self {
        let w = cfg.n_symbols();
        let m = cfg.n_rx;
        let times = (1..=w).map(|l| l as f64 * cfg.symbol_interval).collect();
        let symbols = match cfg.symbol_phases {
            SymbolPhases::Equal => vec![vec![Complex64::new(cfg.symbol_mag, 0.0); m]; w],
            SymbolPhases::Random => {
                let mut r = rng::stream(cfg.seed, 0, 0, rng::SYMBOL_STAGE);
                (0..w)
                    .map(|_| {
                        (0..m)
                            .map(|_| Complex64::from_polar(cfg.symbol_mag, r.random::<f64>() * 2.0 * PI))
                            .collect()
                    })
                    .collect()
            }
        };
        SymbolStream { times, symbols }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_rx(&self) -> usize {
        self.symbols[0].len()
    }

    /// True when every symbol has modulus `mag` (to rounding).
    pub fn is_constant_modulus(&self, mag: f64) -> bool {
        self.symbols
            .iter()
            .flatten()
            .all(|z| (z.norm() - mag).abs() <= 1e-12 * mag.max(1.0))
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        SymbolStream {
            times: self.times.clone(),
            symbols: self.symbols.iter().map(|v| v.iter().map(|z| z * a).collect()).collect(),
        }
    }

    /// Symbol-wise sum of two streams sharing the same instants.
    pub fn add(&self, other: &SymbolStream) -> Result<Self> {
        if self.times != other.times || self.n_rx() != other.n_rx() {
            return Err(Error::InvalidInput("streams differ in instants or width".into()));
        }
        Ok(SymbolStream {
            times: self.times.clone(),
            symbols: self
                .symbols
                .iter()
                .zip(&other.symbols)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        })
    }

    pub fn shifted(&self, dt: f64) -> Self {
        SymbolStream {
            times: self.times.iter().map(|t| t + dt).collect(),
            symbols: self.symbols.clone(),
        }
    }
}

/// Received signal: one complex `M`-vector per query time.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub times: Vec<f64>,
    pub values: Vec<Vec<Complex64>>,
    pub fingerprint: String,
}

impl SignalTrace {
    /// CSV with columns `time,receiver,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# config {}", self.fingerprint)?;
        writeln!(out, "time,receiver,re,im")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            for (j, z) in v.iter().enumerate() {
                writeln!(out, "{t},{j},{:e},{:e}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("no query times".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("query times must be strictly increasing".into()));
    }
    Ok(())
}

/// Channel-independent quadrature weights `u_b(t)` for a fixed grid, stream
/// and set of query times.
#[derive(Debug, Clone)]
pub struct SynthesisPlan {
    pub fingerprint: String,
    pub times: Vec<f64>,
    n_rx: usize,
    /// `weights[t][b]`
    weights: Vec<Vec<DVector<Complex64>>>,
}

impl SynthesisPlan {
    pub fn new(grid: &FrequencyGrid, pulse: Pulse, stream: &SymbolStream, times: &[f64]) -> Result<Self> {
        check_times(times)?;
        let n_rx = stream.n_rx();
        let amp: Vec<f64> = grid.samples.iter().map(|s| s.weight * pulse.amplitude(s.omega)).collect();
        let weights = times
            .par_iter()
            .map(|&t| {
                let mut per_bin = vec![DVector::<Complex64>::zeros(n_rx); grid.n_bins];
                let mut kernel = vec![Complex64::new(0.0, 0.0); grid.n_bins];
                for (tau, m) in stream.times.iter().zip(&stream.symbols) {
                    kernel.iter_mut().for_each(|k| *k = Complex64::new(0.0, 0.0));
                    let lag = t - tau;
                    for (s, a) in grid.samples.iter().zip(&amp) {
                        kernel[s.bin] += Complex64::from_polar(*a, -s.omega * lag);
                    }
                    for (u, k) in per_bin.iter_mut().zip(&kernel) {
                        for (ui, mi) in u.iter_mut().zip(m) {
                            *ui += k * mi;
                        }
                    }
                }
                per_bin
            })
            .collect();
        Ok(SynthesisPlan {
            fingerprint: grid.fingerprint.clone(),
            times: times.to_vec(),
            n_rx,
            weights,
        })
    }

    /// `u_b(t)` for query index `t` and bin `b`.
    pub fn weight(&self, t: usize, b: usize) -> &DVector<Complex64> {
        &self.weights[t][b]
    }

    pub fn n_bins(&self) -> usize {
        self.weights.first().map_or(0, |w| w.len())
    }

    /// Received values `S_j(t)` for every query time, flattened time-major.
    pub fn apply_flat(&self, real: &ChannelRealization) -> Result<Vec<Complex64>> {
        if real.fingerprint != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                found: real.fingerprint.clone(),
            });
        }
        if real.bins.len() != self.n_bins() || real.n_rx() != self.n_rx {
            return Err(Error::InvalidInput("realization does not match the plan's grid".into()));
        }
        let grams: Vec<_> = real.bins.iter().map(|b| &b.composed * b.composed.adjoint()).collect();
        let mut out = Vec::with_capacity(self.times.len() * self.n_rx);
        for per_bin in &self.weights {
            let mut s = DVector::<Complex64>::zeros(self.n_rx);
            for (g, u) in grams.iter().zip(per_bin) {
                s += g * u;
            }
            out.extend(s.iter());
        }
        Ok(out)
    }

    pub fn apply(&self, real: &ChannelRealization) -> Result<SignalTrace> {
        let flat = self.apply_flat(real)?;
        Ok(SignalTrace {
            times: self.times.clone(),
            values: flat.chunks(self.n_rx).map(|c| c.to_vec()).collect(),
            fingerprint: self.fingerprint.clone(),
        })
    }
}

/// Received signal `S_j(t)` for one realization.
pub fn synthesize(
    grid: &FrequencyGrid,
    pulse: Pulse,
    real: &ChannelRealization,
    stream: &SymbolStream,
    times: &[f64],
) -> Result<SignalTrace> {
    if real.fingerprint != grid.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: grid.fingerprint.clone(),
            found: real.fingerprint.clone(),
        });
    }
    SynthesisPlan::new(grid, pulse, stream, times)?.apply(real)
}

/// Ensemble mean `E S(t) = N·ΠK·Πσ · Σ_l m(τ_l) c_g B e^{−iω₀(t−τ_l)} e^{−B²(t−τ_l)²}`.
///
/// Uses the untruncated pulse transform, so it differs from the quadrature
/// mean by the pulse mass outside `ω₀ ± 4B` (about 0.5%).
pub fn mean_signal(cfg: &ChannelConfig, stream: &SymbolStream, times: &[f64]) -> Result<SignalTrace> {
    check_times(times)?;
    let pulse = Pulse::from_config(cfg);
    let gain = mean_gain(cfg);
    let values = times
        .iter()
        .map(|&t| {
            let mut v = vec![Complex64::new(0.0, 0.0); stream.n_rx()];
            for (tau, m) in stream.times.iter().zip(&stream.symbols) {
                let k = pulse.transform(t - tau) * gain;
                for (vi, mi) in v.iter_mut().zip(m) {
                    *vi += k * mi;
                }
            }
            v
        })
        .collect();
    Ok(SignalTrace {
        times: times.to_vec(),
        values,
        fingerprint: cfg.fingerprint(),
    })
}

/// `E H H† = N·ΠK_j·Πσ_k · I`.
pub fn mean_gain(cfg: &ChannelConfig) -> f64 {
    let dims = cfg.n_tx as f64 * cfg.pinholes.iter().map(|&k| k as f64).product::<f64>();
    dims * cfg.stage_variances().iter().product::<f64>()
}
