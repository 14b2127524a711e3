//! Experiment parameterization, the frequency grid and random channel draws.
//!
//! The channel is block fading in frequency: the transfer matrix is constant
//! on bins of width `coherence_bw` and independent across bins. A chain of
//! pinhole layers makes each bin's transfer matrix a product of independent
//! Gaussian stage matrices.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Violation};
use crate::rng;

pub type CMatrix = DMatrix<Complex64>;

/// Frequency regime derived from `bandwidth / coherence_bw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Broadband, frequency selective: `B / β_c > 1`.
    Bbfs,
    /// Narrowband, frequency non-selective: `B ≤ β_c`.
    Nbfn,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Bbfs => "BBFS",
            Regime::Nbfn => "NBFN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolPhases {
    /// Every symbol equals `symbol_mag`.
    #[default]
    Equal,
    /// Uniform random phases drawn once per configuration seed.
    Random,
}

fn default_one() -> f64 {
    1.0
}

/// Full parameterization of one experiment.
///
/// Frequencies are angular (rad per unit time). `variances` holds one entry
/// variance per stage; an empty list means unit variance everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    #[serde(default)]
    pub pinholes: Vec<usize>,
    #[serde(default)]
    pub variances: Vec<f64>,
    pub carrier: f64,
    pub bandwidth: f64,
    pub coherence_bw: f64,
    pub symbol_interval: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_symbols: Option<usize>,
    #[serde(default = "default_one")]
    pub symbol_mag: f64,
    #[serde(default = "default_one")]
    pub noise_power: f64,
    #[serde(default = "default_one")]
    pub tx_power: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub symbol_phases: SymbolPhases,
}

impl ChannelConfig {
    /// Flat channel with unit variances, unit symbols and unit noise/power.
    pub fn flat(n_tx: usize, n_rx: usize, carrier: f64, bandwidth: f64, coherence_bw: f64, symbol_interval: f64) -> Self {
        ChannelConfig {
            n_tx,
            n_rx,
            pinholes: Vec::new(),
            variances: Vec::new(),
            carrier,
            bandwidth,
            coherence_bw,
            symbol_interval,
            n_symbols: None,
            symbol_mag: 1.0,
            noise_power: 1.0,
            tx_power: 1.0,
            seed: 0,
            symbol_phases: SymbolPhases::Equal,
        }
    }

    pub fn with_pinholes(mut self, pinholes: Vec<usize>) -> Self {
        self.pinholes = pinholes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_symbols(mut self, n_symbols: usize) -> Self {
        self.n_symbols = Some(n_symbols);
        self
    }

    /// Number of propagation stages `n` (one more than the pinhole layers).
    pub fn n_stages(&self) -> usize {
        self.pinholes.len() + 1
    }

    /// Dimension chain `N, K₁, …, K_{n−1}, M`; stage `k` maps `dims[k]` to `dims[k+1]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.n_stages() + 1);
        d.push(self.n_tx);
        d.extend_from_slice(&self.pinholes);
        d.push(self.n_rx);
        d
    }

    pub fn stage_variance(&self, stage: usize) -> f64 {
        self.variances.get(stage).copied().unwrap_or(1.0)
    }

    pub fn stage_variances(&self) -> Vec<f64> {
        (0..self.n_stages()).map(|k| self.stage_variance(k)).collect()
    }

    pub fn regime(&self) -> Regime {
        if self.bandwidth > self.coherence_bw {
            Regime::Bbfs
        } else {
            Regime::Nbfn
        }
    }

    /// Symbols per unit time in each stream, `C = 1/τ`.
    pub fn symbol_rate(&self) -> f64 {
        1.0 / self.symbol_interval
    }

    /// Stream length. Defaults to `ceil(4·max(1, B/β_c))`, raised in the
    /// broadband regime so the symbol window spans at least four coherence
    /// times `2π/β_c`.
    pub fn n_symbols(&self) -> usize {
        self.n_symbols.unwrap_or_else(|| {
            let base = (4.0 * (self.bandwidth / self.coherence_bw).max(1.0)).ceil() as usize;
            match self.regime() {
                Regime::Nbfn => base,
                Regime::Bbfs => {
                    let window = (8.0 * PI / (self.coherence_bw * self.symbol_interval)).ceil() as usize;
                    base.max(window)
                }
            }
        })
    }

    /// Central symbol index, where inter-symbol sums are most complete.
    pub fn central_symbol(&self) -> usize {
        self.n_symbols() / 2
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        if self.n_tx == 0 {
            v.push(Violation::ZeroCount("n_tx"));
        }
        if self.n_rx == 0 {
            v.push(Violation::ZeroCount("n_rx"));
        }
        for (layer, &k) in self.pinholes.iter().enumerate() {
            if k == 0 {
                v.push(Violation::ZeroPinhole { layer });
            }
        }
        if !self.variances.is_empty() && self.variances.len() != self.n_stages() {
            v.push(Violation::VarianceCount {
                expected: self.n_stages(),
                got: self.variances.len(),
            });
        }
        if self.variances.iter().any(|&s| !(s > 0.0)) {
            v.push(Violation::NonPositive("variances"));
        }
        let positive = [
            ("carrier", self.carrier),
            ("bandwidth", self.bandwidth),
            ("coherence_bw", self.coherence_bw),
            ("symbol_interval", self.symbol_interval),
            ("symbol_mag", self.symbol_mag),
            ("noise_power", self.noise_power),
            ("tx_power", self.tx_power),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                v.push(Violation::NonPositive(name));
            }
        }
        if self.bandwidth > 0.0 && self.carrier > 0.0 && self.bandwidth >= self.carrier {
            v.push(Violation::BandwidthNotBelowCarrier {
                bandwidth: self.bandwidth,
                carrier: self.carrier,
            });
        }
        if self.bandwidth > 0.0 && self.symbol_interval > 0.0 {
            let min = 1.0 / (2.0 * self.bandwidth);
            if self.symbol_interval < min {
                v.push(Violation::SymbolIntervalTooShort {
                    interval: self.symbol_interval,
                    min,
                });
            }
        }
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            v.push(Violation::Malformed {
                key: "seed".into(),
                reason: format!("must not exceed {}", i64::MAX),
            });
        }
        if self.n_symbols == Some(0) {
            v.push(Violation::ZeroCount("n_symbols"));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn validated(&self) -> Result<&Self> {
        self.validate().map_err(Error::Config)?;
        Ok(self)
    }

    /// Canonical TOML rendering.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("channel config serializes")
    }

    /// Short stable hash of the canonical rendering.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySample {
    pub omega: f64,
    pub weight: f64,
    pub bin: usize,
}

/// Midpoint quadrature of the band `[ω₀ − 4B, ω₀ + 4B]`, tagged with
/// coherence-bin indices.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    pub samples: Vec<FrequencySample>,
    pub spacing: f64,
    pub center: f64,
    pub half_width: f64,
    pub bin_width: f64,
    pub n_bins: usize,
    pub fingerprint: String,
}

impl FrequencyGrid {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn bin_of(&self, omega: f64) -> Result<usize> {
        if !(omega >= self.lo() && omega <= self.hi()) {
            return Err(Error::OutOfCoverage {
                omega,
                lo: self.lo(),
                hi: self.hi(),
            });
        }
        if self.n_bins == 1 {
            return Ok(0);
        }
        let b = ((omega - self.lo()) / self.bin_width).floor() as usize;
        Ok(b.min(self.n_bins - 1))
    }
}

/// Lays out the quadrature grid for `cfg`.
///
/// The spacing is the smallest of `β_c/4` (resolves the bins), `B/16`
/// (resolves the pulse) and `π / (2(T + 8/B))` where `T` is the longest lag
/// between a symbol instant and a query instant, which keeps the periodic
/// image of the discrete kernel away from every evaluated lag.
pub fn build_frequency_grid(cfg: &ChannelConfig) -> Result<FrequencyGrid> {
    let mut bad = Vec::new();
    if !(cfg.bandwidth > 0.0) {
        bad.push(Violation::NonPositive("bandwidth"));
    }
    if !(cfg.coherence_bw > 0.0) {
        bad.push(Violation::NonPositive("coherence_bw"));
    }
    if !bad.is_empty() {
        return Err(Error::Config(bad));
    }
    cfg.validated()?;

    let b = cfg.bandwidth;
    let half_width = 4.0 * b;
    let max_lag = (cfg.n_symbols() as f64 - 1.0) * cfg.symbol_interval;
    let target = (cfg.coherence_bw / 4.0)
        .min(b / 16.0)
        .min(PI / (2.0 * (max_lag + 8.0 / b)));
    let count = (2.0 * half_width / target).ceil() as usize;
    let spacing = 2.0 * half_width / count as f64;
    let lo = cfg.carrier - half_width;
    let single = cfg.regime() == Regime::Nbfn;

    let samples: Vec<FrequencySample> = (0..count)
        .map(|i| {
            let omega = lo + (i as f64 + 0.5) * spacing;
            let bin = if single {
                0
            } else {
                ((omega - lo) / cfg.coherence_bw).floor() as usize
            };
            FrequencySample {
                omega,
                weight: spacing,
                bin,
            }
        })
        .collect();
    let n_bins = samples.iter().map(|s| s.bin).max().unwrap_or(0) + 1;

    Ok(FrequencyGrid {
        samples,
        spacing,
        center: cfg.carrier,
        half_width,
        bin_width: cfg.coherence_bw,
        n_bins,
        fingerprint: cfg.fingerprint(),
    })
}

/// Stage matrices for one coherence bin and their product.
#[derive(Debug, Clone)]
pub struct BinChannel {
    /// `stages[k]` is `dims[k+1] × dims[k]`; empty when only the product
    /// was drawn.
    pub stages: Vec<CMatrix>,
    /// `M × N` product `h⁽ⁿ⁾ ⋯ h⁽¹⁾`.
    pub composed: CMatrix,
}

impl BinChannel {
    pub fn from_stages(stages: Vec<CMatrix>) -> Result<Self> {
        let composed = compose(&stages)?;
        Ok(BinChannel { stages, composed })
    }

    pub fn composed_only(composed: CMatrix) -> Self {
        BinChannel {
            stages: Vec::new(),
            composed,
        }
    }
}

fn compose(stages: &[CMatrix]) -> Result<CMatrix> {
    let (first, rest) = stages
        .split_first()
        .ok_or_else(|| Error::InvalidInput("a channel needs at least one stage".into()))?;
    let mut acc = first.clone();
    for s in rest {
        if s.ncols() != acc.nrows() {
            return Err(Error::InvalidInput(format!(
                "stage with {} columns cannot follow a stage with {} rows",
                s.ncols(),
                acc.nrows()
            )));
        }
        acc = s * acc;
    }
    Ok(acc)
}

/// One random channel draw: a [`BinChannel`] per coherence bin.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub bins: Vec<BinChannel>,
    pub trial: u64,
    pub fingerprint: String,
    lo: f64,
    hi: f64,
    bin_width: f64,
}

impl ChannelRealization {
    /// Wraps explicit per-bin channels, e.g. deterministic stubs.
    pub fn from_bins(grid: &FrequencyGrid, bins: Vec<BinChannel>) -> Result<Self> {
        if bins.len() != grid.n_bins {
            return Err(Error::InvalidInput(format!(
                "grid has {} bins, got {} channels",
                grid.n_bins,
                bins.len()
            )));
        }
        Ok(ChannelRealization {
            bins,
            trial: 0,
            fingerprint: grid.fingerprint.clone(),
            lo: grid.lo(),
            hi: grid.hi(),
            bin_width: grid.bin_width,
        })
    }

    pub fn n_rx(&self) -> usize {
        self.bins[0].composed.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.bins[0].composed.ncols()
    }

    /// Transfer matrix of the bin containing `omega`.
    pub fn transfer_at(&self, omega: f64) -> Result<&CMatrix> {
        if !(omega >= self.lo && omega <= self.hi) {
            return Err(Error::OutOfCoverage {
                omega,
                lo: self.lo,
                hi: self.hi,
            });
        }
        let n = self.bins.len();
        let b = if n == 1 {
            0
        } else {
            (((omega - self.lo) / self.bin_width).floor() as usize).min(n - 1)
        };
        Ok(&self.bins[b].composed)
    }
}

/// Draws the realization for `trial`. Each `(seed, trial, bin, stage)` has
/// its own stream, so the result does not depend on evaluation order.
pub fn sample_realization(cfg: &ChannelConfig, grid: &FrequencyGrid, trial: u64) -> Result<ChannelRealization> {
    if grid.fingerprint != cfg.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: cfg.fingerprint(),
            found: grid.fingerprint.clone(),
        });
    }
    let dims = cfg.dims();
    let bins = (0..grid.n_bins)
        .map(|b| {
            let stages = (0..cfg.n_stages())
                .map(|k| {
                    let mut rng = rng::stream(cfg.seed, trial, b as u64, k as u64);
                    let var = cfg.stage_variance(k);
                    DMatrix::from_fn(dims[k + 1], dims[k], |_, _| rng::complex_normal(&mut rng, var))
                })
                .collect();
            BinChannel::from_stages(stages)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut real = ChannelRealization::from_bins(grid, bins)?;
    real.trial = trial;
    Ok(real)
}

/// Draws only the composed `M × N` matrix of each bin.
///
/// Works from the receiver side: with `L` the product of the stages already
/// drawn, the columns of `L·h⁽ᵏ⁾` are iid `CN(0, σ_k L L†)`, so they are drawn
/// through an `M × M` Cholesky factor instead of materializing `h⁽ᵏ⁾`. The
/// law matches [`sample_realization`] but the draws do not.
pub fn sample_composed(cfg: &ChannelConfig, grid: &FrequencyGrid, trial: u64) -> Result<ChannelRealization> {
    if grid.fingerprint != cfg.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: cfg.fingerprint(),
            found: grid.fingerprint.clone(),
        });
    }
    let dims = cfg.dims();
    let n = cfg.n_stages();
    let m = cfg.n_rx;
    let bins = (0..grid.n_bins)
        .map(|b| {
            let draw = |k: usize, rows: usize, cols: usize, var: f64| {
                let mut rng = rng::stream(cfg.seed, trial, b as u64, k as u64);
                DMatrix::from_fn(rows, cols, |_, _| rng::complex_normal(&mut rng, var))
            };
            let mut acc = draw(n - 1, dims[n], dims[n - 1], cfg.stage_variance(n - 1));
            for k in (0..n - 1).rev() {
                let var = cfg.stage_variance(k);
                // a thin inner dimension is cheaper to draw directly
                let factor = if dims[k + 1] > m {
                    (&acc * acc.adjoint() * Complex64::from(var)).cholesky()
                } else {
                    None
                };
                acc = match factor {
                    Some(c) => c.l() * draw(k, m, dims[k], 1.0),
                    None => &acc * draw(k, dims[k + 1], dims[k], var),
                };
            }
            BinChannel::composed_only(acc)
        })
        .collect();
    let mut real = ChannelRealization::from_bins(grid, bins)?;
    real.trial = trial;
    Ok(real)
}
