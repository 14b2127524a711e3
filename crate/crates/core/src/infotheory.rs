//! SINR, information rate and the power/stability tradeoff.
//!
//! All quantities are closed-form evaluations. Rates are in nats per unit
//! time.

use std::io::Write;

use crate::channel::{ChannelConfig, Regime};
use crate::error::{Error, Result};
use crate::moments::neff;

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {x}")))
    }
}

/// `(1/sir + 1/snr)⁻¹`.
pub fn harmonic_sinr(sir: f64, snr: f64) -> f64 {
    1.0 / (1.0 / sir + 1.0 / snr)
}

/// Signal-to-noise ratio `P / (ν M C)`.
pub fn snr(n_rx: f64, symbol_rate: f64, noise: f64, power: f64) -> f64 {
    power / (noise * n_rx * symbol_rate)
}

/// Broadband SINR `(MC/(N_eff B) + νMC/P)⁻¹`.
pub fn sinr_bbfs(n_eff: f64, n_rx: f64, symbol_rate: f64, bandwidth: f64, noise: f64, power: f64) -> Result<f64> {
    for (k, v) in [
        ("N_eff", n_eff),
        ("M", n_rx),
        ("C", symbol_rate),
        ("B", bandwidth),
        ("ν", noise),
        ("P", power),
    ] {
        positive(k, v)?;
    }
    let sir = n_eff * bandwidth / (n_rx * symbol_rate);
    Ok(harmonic_sinr(sir, snr(n_rx, symbol_rate, noise, power)))
}

/// Narrowband SINR `(M/N_eff + νMC/P)⁻¹`.
pub fn sinr_nbfn(n_eff: f64, n_rx: f64, symbol_rate: f64, noise: f64, power: f64) -> Result<f64> {
    for (k, v) in [("N_eff", n_eff), ("M", n_rx), ("C", symbol_rate), ("ν", noise), ("P", power)] {
        positive(k, v)?;
    }
    Ok(harmonic_sinr(n_eff / n_rx, snr(n_rx, symbol_rate, noise, power)))
}

/// `R = ½·M·C·ln(1 + sinr)`.
pub fn info_rate(n_rx: f64, symbol_rate: f64, sinr: f64) -> Result<f64> {
    if !(sinr >= 0.0) {
        return Err(Error::InvalidInput(format!("sinr must be non-negative, got {sinr}")));
    }
    Ok(0.5 * n_rx * symbol_rate * sinr.ln_1p())
}

/// Power at which noise stops dominating interference: `ν·B·N_eff`.
pub fn optimal_power(bandwidth: f64, noise: f64, n_eff: f64) -> Result<f64> {
    Ok(positive("ν", noise)? * positive("B", bandwidth)? * positive("N_eff", n_eff)?)
}

/// Unsimplified form `ν·max(B, C)·N_eff`.
pub fn optimal_power_general(bandwidth: f64, symbol_rate: f64, noise: f64, n_eff: f64) -> Result<f64> {
    optimal_power(bandwidth.max(positive("C", symbol_rate)?), noise, n_eff)
}

/// Transmitter count balancing interference and noise at fixed power:
/// `P / (ν·max(B, C))`.
pub fn optimal_n_tx(bandwidth: f64, symbol_rate: f64, noise: f64, power: f64) -> Result<f64> {
    Ok(positive("P", power)? / (positive("ν", noise)? * positive("B", bandwidth)?.max(positive("C", symbol_rate)?)))
}

/// One point of a rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub n_rx: f64,
    pub symbol_rate: f64,
    pub bandwidth: f64,
    pub n_eff: f64,
    pub noise: f64,
    pub power: f64,
    pub sir: f64,
    pub snr: f64,
    pub sinr: f64,
    /// nats per unit time
    pub rate: f64,
    /// Predicted normalized variance at this operating point.
    pub predicted_nvar: f64,
}

impl RatePoint {
    /// Evaluates the regime-appropriate SINR and rate.
    pub fn evaluate(regime: Regime, n_rx: f64, symbol_rate: f64, bandwidth: f64, n_eff: f64, noise: f64, power: f64) -> Result<Self> {
        let sinr = match regime {
            Regime::Bbfs => sinr_bbfs(n_eff, n_rx, symbol_rate, bandwidth, noise, power)?,
            Regime::Nbfn => sinr_nbfn(n_eff, n_rx, symbol_rate, noise, power)?,
        };
        let (sir, predicted_nvar) = match regime {
            Regime::Bbfs => (n_eff * bandwidth / (n_rx * symbol_rate), n_rx * symbol_rate / (bandwidth * n_eff)),
            Regime::Nbfn => (n_eff / n_rx, n_rx / n_eff),
        };
        Ok(RatePoint {
            n_rx,
            symbol_rate,
            bandwidth,
            n_eff,
            noise,
            power,
            sir,
            snr: snr(n_rx, symbol_rate, noise, power),
            sinr,
            rate: info_rate(n_rx, symbol_rate, sinr)?,
            predicted_nvar,
        })
    }

    pub fn mc(&self) -> f64 {
        self.n_rx * self.symbol_rate
    }
}

/// Sweep grid: `M·C` values and transmit powers.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGrid {
    pub mc: Vec<f64>,
    pub powers: Vec<f64>,
}

impl RateGrid {
    /// `points` log-spaced `M·C` values in `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, points: usize, powers: Vec<f64>) -> Self {
        let n = points.max(2);
        let mc = (0..n)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect();
        RateGrid { mc, powers }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub regime: Regime,
    pub points: Vec<RatePoint>,
    pub optimum: usize,
}

impl RateTable {
    pub fn best(&self) -> &RatePoint {
        &self.points[self.optimum]
    }

    /// Energy per nat `P/R` at the optimum.
    pub fn energy_per_nat(&self) -> f64 {
        let b = self.best();
        b.power / b.rate
    }

    pub const CSV_HEADER: &'static str =
        "config_id,m,c,mc,b,n_eff,nu,p,sir,snr,sinr,rate_nats_per_time,predicted_nvar,optimum";

    pub fn write_csv<W: Write>(&self, config_id: &str, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# rates in nats per unit time; regime {}", self.regime.name())?;
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for (i, p) in self.points.iter().enumerate() {
            writeln!(
                out,
                "{config_id},{},{:e},{:e},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{}",
                p.n_rx,
                p.symbol_rate,
                p.mc(),
                p.bandwidth,
                p.n_eff,
                p.noise,
                p.power,
                p.sir,
                p.snr,
                p.sinr,
                p.rate,
                p.predicted_nvar,
                i == self.optimum
            )?;
        }
        Ok(())
    }
}

/// Evaluates every `(M·C, P)` pair; `M`, `B`, `ν` and `N_eff` come from `cfg`.
pub fn rate_sweep(cfg: &ChannelConfig, grid: &RateGrid) -> Result<RateTable> {
    if grid.mc.is_empty() || grid.powers.is_empty() {
        return Err(Error::InvalidInput("rate sweep grid is empty".into()));
    }
    let ks: Vec<f64> = cfg.pinholes.iter().map(|&k| k as f64).collect();
    let (n_eff, _) = neff(cfg.n_tx as f64, &ks);
    let m = cfg.n_rx as f64;
    let regime = cfg.regime();
    let mut points = Vec::with_capacity(grid.mc.len() * grid.powers.len());
    for &p in &grid.powers {
        for &mc in &grid.mc {
            points.push(RatePoint::evaluate(regime, m, mc / m, cfg.bandwidth, n_eff, cfg.noise_power, p)?);
        }
    }
    let optimum = points
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.rate > points[best].rate { i } else { best });
    Ok(RateTable { regime, points, optimum })
}
