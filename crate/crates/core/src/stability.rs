//! Monte Carlo estimation of the normalized variance `𝒱_j(τ_n)` and the
//! predicted stability laws it is checked against.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::channel::{build_frequency_grid, sample_composed, ChannelConfig, Regime};
use crate::error::{Error, Result, Violation};
use crate::moments::{enumerate_graphs, neff, MomentSpec, MonomialSum};
use crate::timereversal::{mean_gain, Pulse, SymbolStream, SynthesisPlan};

pub const MIN_TRIALS: usize = 100;
pub const BATCHES: usize = 20;
/// A mean closer to zero than this many standard errors is not divided by.
pub const RELIABILITY_SIGMAS: f64 = 5.0;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct CSum {
    re: Sum,
    im: Sum,
}

impl CSum {
    fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

fn mean_and_var(xs: &[Complex64]) -> (Complex64, f64) {
    let mut s = CSum::default();
    xs.iter().for_each(|&z| s.add(z));
    let mean = s.value() / xs.len() as f64;
    let mut v = Sum::default();
    xs.iter().for_each(|z| v.add((z - mean).norm_sqr()));
    let var = if xs.len() > 1 { v.value() / (xs.len() - 1) as f64 } else { 0.0 };
    (mean, var)
}

fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1.0) / n).sqrt()
}

/// Statistics for one `(receiver, symbol instant)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub receiver: usize,
    pub symbol_index: usize,
    pub mean: Complex64,
    pub var: f64,
    /// `var / |mean|²`, absent when the mean is not resolved from zero.
    pub nvar: Option<f64>,
    pub mean_se: f64,
    pub var_se: f64,
    pub nvar_se: f64,
}

impl CellEstimate {
    pub fn reliable(&self) -> bool {
        self.nvar.is_some()
    }
}

/// Per-cell means, variances and normalized variances with batch-means
/// standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    pub fingerprint: String,
    pub trials: usize,
    pub batches: usize,
    pub n_rx: usize,
    pub n_times: usize,
    /// Time-major: cell `(n, j)` sits at `n * n_rx + j`.
    pub cells: Vec<CellEstimate>,
}

impl VarianceEstimate {
    /// Aggregates per-trial samples. `samples[t]` holds one value per cell in
    /// time-major order. Aggregation runs in trial order, so the result only
    /// depends on the samples.
    pub fn from_samples(samples: &[Vec<Complex64>], n_rx: usize, fingerprint: &str) -> Result<Self> {
        let trials = samples.len();
        if trials < MIN_TRIALS {
            return Err(Error::Config(vec![Violation::TooFewTrials {
                trials,
                min: MIN_TRIALS,
            }]));
        }
        let n_cells = samples[0].len();
        if n_rx == 0 || !n_cells.is_multiple_of(n_rx) || samples.iter().any(|s| s.len() != n_cells) {
            return Err(Error::InvalidInput("ragged sample matrix".into()));
        }
        let bounds: Vec<usize> = (0..=BATCHES).map(|b| b * trials / BATCHES).collect();
        let mut column = Vec::with_capacity(trials);
        let cells = (0..n_cells)
            .map(|c| {
                column.clear();
                column.extend(samples.iter().map(|s| s[c]));
                let (mean, var) = mean_and_var(&column);
                let mut bm = Vec::with_capacity(BATCHES);
                let mut bv = Vec::with_capacity(BATCHES);
                let mut bn = Vec::with_capacity(BATCHES);
                for w in bounds.windows(2) {
                    let (m, v) = mean_and_var(&column[w[0]..w[1]]);
                    bm.push(m);
                    bv.push(v);
                    bn.push(v / m.norm_sqr());
                }
                let nb = BATCHES as f64;
                let mean_se = (bm.iter().map(|m| (m - mean).norm_sqr()).sum::<f64>() / (nb * (nb - 1.0))).sqrt();
                let var_se = std_error(&bv);
                let reliable = mean.norm() > RELIABILITY_SIGMAS * mean_se;
                let (nvar, nvar_se) = if reliable {
                    (Some(var / mean.norm_sqr()), std_error(&bn))
                } else {
                    (None, f64::NAN)
                };
                CellEstimate {
                    receiver: c % n_rx,
                    symbol_index: c / n_rx,
                    mean,
                    var,
                    nvar,
                    mean_se,
                    var_se,
                    nvar_se,
                }
            })
            .collect();
        Ok(VarianceEstimate {
            fingerprint: fingerprint.to_string(),
            trials,
            batches: BATCHES,
            n_rx,
            n_times: n_cells / n_rx,
            cells,
        })
    }

    pub fn cell(&self, symbol_index: usize, receiver: usize) -> &CellEstimate {
        &self.cells[symbol_index * self.n_rx + receiver]
    }

    /// Normalized variance at one symbol instant averaged over receivers,
    /// with the averaged standard error. `None` if any receiver is unreliable.
    pub fn nvar_at(&self, symbol_index: usize) -> Option<(f64, f64)> {
        let cells: Vec<_> = (0..self.n_rx).map(|j| self.cell(symbol_index, j)).collect();
        let vals: Option<Vec<f64>> = cells.iter().map(|c| c.nvar).collect();
        let vals = vals?;
        let m = self.n_rx as f64;
        let se = cells.iter().map(|c| c.nvar_se).sum::<f64>() / m;
        Some((vals.iter().sum::<f64>() / m, se))
    }

    pub const CSV_HEADER: &'static str = "config_id,receiver,symbol_index,mean_re,mean_im,var,nvar,nvar_se,trials,reliable";

    /// Rows in the documented column order (no header).
    pub fn write_csv_rows<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for c in &self.cells {
            let (nv, se) = match c.nvar {
                Some(v) => (format!("{v:e}"), format!("{:e}", c.nvar_se)),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{},{},{},{}",
                self.fingerprint,
                c.receiver,
                c.symbol_index,
                c.mean.re,
                c.mean.im,
                c.var,
                nv,
                se,
                self.trials,
                c.reliable()
            )?;
        }
        Ok(())
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Received signal at every symbol instant for trials `0..trials`.
///
/// `workers = None` uses the global rayon pool.
pub fn simulate_trials(cfg: &ChannelConfig, trials: usize, workers: Option<usize>) -> Result<Vec<Vec<Complex64>>> {
    cfg.validated()?;
    let grid = build_frequency_grid(cfg)?;
    let stream = SymbolStream::from_config(cfg);
    with_workers(workers, || {
        let plan = SynthesisPlan::new(&grid, Pulse::from_config(cfg), &stream, &stream.times)?;
        (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let real = sample_composed(cfg, &grid, t)?;
                plan.apply_flat(&real)
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Monte Carlo `𝒱_j(τ_n)` for every receiver and symbol instant.
pub fn mc_normalized_variance(cfg: &ChannelConfig, trials: usize, workers: Option<usize>) -> Result<VarianceEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::Config(vec![Violation::TooFewTrials {
            trials,
            min: MIN_TRIALS,
        }]));
    }
    let samples = simulate_trials(cfg, trials, workers)?;
    VarianceEstimate::from_samples(&samples, cfg.n_rx, &cfg.fingerprint())
}

/// Predicted normalized variance: `MC/(B·N_eff)` (BBFS) or `M/N_eff` (NBFN).
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPrediction {
    pub regime: Regime,
    pub predicted: f64,
    pub n_rx: usize,
    pub symbol_rate: f64,
    pub bandwidth: f64,
    pub n_eff: f64,
}

pub fn predicted_normalized_variance(cfg: &ChannelConfig) -> StabilityPrediction {
    let ks: Vec<f64> = cfg.pinholes.iter().map(|&k| k as f64).collect();
    let (n_eff, _) = neff(cfg.n_tx as f64, &ks);
    let m = cfg.n_rx as f64;
    let c = cfg.symbol_rate();
    let regime = cfg.regime();
    let predicted = match regime {
        Regime::Bbfs => m * c / (cfg.bandwidth * n_eff),
        Regime::Nbfn => m / n_eff,
    };
    StabilityPrediction {
        regime,
        predicted,
        n_rx: cfg.n_rx,
        symbol_rate: c,
        bandwidth: cfg.bandwidth,
        n_eff,
    }
}

/// Exact ensemble mean and variance of the simulated signal, per cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCell {
    pub mean: Complex64,
    pub var: f64,
}

impl ModelCell {
    pub fn nvar(&self) -> f64 {
        self.var / self.mean.norm_sqr()
    }
}

/// Ensemble moments of the discretized model without sampling.
///
/// Bins are independent, so `Var S_j(t) = Σ_b Var (G_b u_b(t))_j`, and each
/// term is the Wick fluctuation sum evaluated at the symbol vector
/// `u_b(t)`. Cells are time-major like [`VarianceEstimate::cells`].
pub fn model_moments(cfg: &ChannelConfig) -> Result<Vec<ModelCell>> {
    cfg.validated()?;
    let grid = build_frequency_grid(cfg)?;
    let stream = SymbolStream::from_config(cfg);
    let plan = SynthesisPlan::new(&grid, Pulse::from_config(cfg), &stream, &stream.times)?;
    let graphs = enumerate_graphs(cfg.n_stages())?;
    let fluctuation = MonomialSum {
        terms: graphs.iter().filter(|g| !g.is_mean()).map(|g| g.monomial.clone()).collect(),
    };
    let dims = cfg.dims();
    let (own, total) = fluctuation.exact_counts(&dims);
    let sigma2: f64 = cfg.stage_variances().iter().map(|s| s * s).product();
    let own = num_traits::ToPrimitive::to_f64(&own).unwrap_or(f64::INFINITY) * sigma2;
    let total = num_traits::ToPrimitive::to_f64(&total).unwrap_or(f64::INFINITY) * sigma2;
    let gain = mean_gain(cfg);

    let mut out = Vec::with_capacity(plan.times.len() * cfg.n_rx);
    for t in 0..plan.times.len() {
        for j in 0..cfg.n_rx {
            let mut mean = Complex64::new(0.0, 0.0);
            let mut var = 0.0;
            for b in 0..plan.n_bins() {
                let u = plan.weight(t, b);
                mean += u[j];
                var += own * u[j].norm_sqr() + total * u.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            out.push(ModelCell { mean: mean * gain, var });
        }
    }
    Ok(out)
}

/// Moment spec matching one bin of `cfg` with unit symbols.
pub fn bin_moment_spec(cfg: &ChannelConfig) -> MomentSpec {
    MomentSpec {
        n_tx: cfg.n_tx,
        pinholes: cfg.pinholes.clone(),
        n_rx: cfg.n_rx,
        variances: cfg.stage_variances(),
        symbols: vec![Complex64::new(cfg.symbol_mag, 0.0); cfg.n_rx],
        receiver: 0,
    }
}

/// Ordinary least squares of `log measured` on `log predicted`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% confidence interval of the slope.
    pub slope_ci: (f64, f64),
    pub points: usize,
}

pub const MIN_POINTS: usize = 5;
pub const MIN_DECADES: f64 = 1.5;

/// Fits `ln y = slope·ln x + intercept` over `(x, y)` pairs.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<Regression> {
    if points.len() < MIN_POINTS {
        return Err(Error::InvalidInput(format!(
            "{} points given, a scaling fit needs at least {MIN_POINTS}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidInput("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (lo, hi) = lx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let decades = (hi - lo) / std::f64::consts::LN_10;
    if decades < MIN_DECADES {
        return Err(Error::InvalidInput(format!(
            "predictors span {decades:.2} decades, need at least {MIN_DECADES}"
        )));
    }
    let n = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let dof = n - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::NAN);
    Ok(Regression {
        slope,
        intercept,
        r2,
        slope_ci: (slope - t * se, slope + t * se),
        points: points.len(),
    })
}

/// One configuration of a scaling study.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub fingerprint: String,
    pub prediction: StabilityPrediction,
    /// Receiver-averaged `𝒱` at the central symbol instant.
    pub measured: f64,
    pub measured_se: f64,
}

/// Measured `𝒱` at the central symbol instant for each config, regressed
/// against the predicted law on log-log axes.
pub fn scaling_regression(
    configs: &[ChannelConfig],
    trials: usize,
    workers: Option<usize>,
) -> Result<(Vec<ScalingPoint>, Regression)> {
    let points = configs
        .iter()
        .map(|cfg| {
            let est = mc_normalized_variance(cfg, trials, workers)?;
            let (measured, measured_se) = est.nvar_at(cfg.central_symbol()).ok_or_else(|| {
                Error::InvalidInput(format!("config {} has an unresolved mean", cfg.fingerprint()))
            })?;
            Ok(ScalingPoint {
                fingerprint: cfg.fingerprint(),
                prediction: predicted_normalized_variance(cfg),
                measured,
                measured_se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.prediction.predicted, p.measured)).collect();
    let fit = fit_loglog(&pairs)?;
    Ok((points, fit))
}
