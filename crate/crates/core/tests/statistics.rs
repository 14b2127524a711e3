use nalgebra::DMatrix;
use num_complex::Complex64;
use statrs::function::erf::erf;
use trmimo::channel::{build_frequency_grid, sample_composed, sample_realization, BinChannel, ChannelConfig, ChannelRealization};
use trmimo::stability::{mc_normalized_variance, model_moments, simulate_trials, VarianceEstimate};
use trmimo::timereversal::{mean_signal, synthesize, Pulse, SymbolStream, SynthesisPlan};

fn entries(m: &DMatrix<Complex64>) -> impl Iterator<Item = Complex64> + '_ {
    m.iter().copied()
}

#[test]
fn stage_entries_are_circular_with_configured_variance() {
    let mut cfg = ChannelConfig::flat(4, 3, 10.0, 1.0, 2.0, 1.0).with_pinholes(vec![5]);
    cfg.variances = vec![0.5, 2.0];
    let g = build_frequency_grid(&cfg).unwrap();
    let trials = 3000;
    let mut p = [0.0; 2];
    let mut pseudo = [Complex64::new(0.0, 0.0); 2];
    let mut count = [0usize; 2];
    for t in 0..trials {
        let r = sample_realization(&cfg, &g, t).unwrap();
        for (k, s) in r.bins[0].stages.iter().enumerate() {
            for z in entries(s) {
                p[k] += z.norm_sqr();
                pseudo[k] += z * z;
                count[k] += 1;
            }
        }
    }
    for k in 0..2 {
        let n = count[k] as f64;
        let sigma = cfg.variances[k];
        // E|h|² = σ, E h² = 0; relative SE of the power ≈ 1/√n
        assert!((p[k] / n / sigma - 1.0).abs() < 5.0 / n.sqrt(), "stage {k}: {}", p[k] / n);
        assert!((pseudo[k] / n).norm() < 5.0 * sigma / n.sqrt());
    }
}

fn correlation(a: &[Complex64], b: &[Complex64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<Complex64>() / n;
    let mb = b.iter().sum::<Complex64>() / n;
    let cov: Complex64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb).conj()).sum::<Complex64>() / n;
    let va = a.iter().map(|x| (x - ma).norm_sqr()).sum::<f64>() / n;
    let vb = b.iter().map(|y| (y - mb).norm_sqr()).sum::<f64>() / n;
    cov.norm() / (va * vb).sqrt()
}

#[test]
fn bins_and_trials_are_uncorrelated() {
    let cfg = ChannelConfig::flat(3, 2, 10.0, 1.0, 0.25, 2.0).with_pinholes(vec![4]);
    let g = build_frequency_grid(&cfg).unwrap();
    assert!(g.n_bins >= 3);
    let trials = 4000;
    let draws: Vec<ChannelRealization> = (0..trials).map(|t| sample_composed(&cfg, &g, t).unwrap()).collect();
    let at = |b: usize| -> Vec<Complex64> { draws.iter().map(|r| r.bins[b].composed[(1, 2)]).collect() };
    let (b0, b1, b2) = (at(0), at(1), at(2));
    let bound = 5.0 / (trials as f64).sqrt();
    assert!(correlation(&b0, &b1) < bound);
    assert!(correlation(&b1, &b2) < bound);
    // consecutive trials
    assert!(correlation(&b0[..trials as usize - 1], &b0[1..]) < bound);
    // the same draw is perfectly correlated with itself
    assert!((correlation(&b0, &b0) - 1.0).abs() < 1e-12);
}

#[test]
fn quadrature_matches_the_truncated_pulse_integral() {
    // identity channel, one symbol: S(τ₁) = Σ w g(ω_f) ≈ ∫_{ω₀−4B}^{ω₀+4B} g
    for b in [0.5, 1.0, 2.0] {
        let c = ChannelConfig::flat(1, 1, 20.0, b, 10.0, 1.0 / b).with_symbols(1);
        let g = build_frequency_grid(&c).unwrap();
        let one = BinChannel::from_stages(vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))]).unwrap();
        let r = ChannelRealization::from_bins(&g, vec![one]).unwrap();
        let s = SymbolStream::from_config(&c);
        let v = synthesize(&g, Pulse::from_config(&c), &r, &s, &s.times).unwrap().values[0][0];
        let exact = (2.0 * std::f64::consts::PI).powf(-0.25) * 2.0 * b * std::f64::consts::PI.sqrt() * erf(2.0);
        // midpoint endpoint error at spacing B/16 is a few parts per million
        assert!((v.re / exact - 1.0).abs() < 1e-5, "B={b}: {} vs {exact}", v.re);
        assert!(v.im.abs() < 1e-9 * exact);
        // the untruncated transform exceeds it by the tail mass 1 − erf(2)
        let full = Pulse::from_config(&c).transform(0.0).re;
        assert!((exact / full - erf(2.0)).abs() < 1e-12);
    }
}

#[test]
fn grid_captures_pulse_energy_over_its_coverage() {
    for (b, beta) in [(1.0, 0.125), (0.5, 2.0), (3.0, 0.5)] {
        let c = ChannelConfig::flat(2, 2, 20.0, b, beta, 1.0 / b);
        let g = build_frequency_grid(&c).unwrap();
        let p = Pulse::from_config(&c);
        let sum: f64 = g.samples.iter().map(|s| s.weight * p.power_density(s.omega)).sum();
        // ∫ g² over ω₀ ± 4B; the full line integral is B
        let covered = b * erf(2.0 * std::f64::consts::SQRT_2);
        assert!((sum / covered - 1.0).abs() < 1e-6, "B={b}: {sum} vs {covered}");
        assert!((1.0 - covered / b) > 6e-5);
    }
}

#[test]
fn ensemble_mean_matches_closed_form() {
    let cfg = ChannelConfig::flat(2, 2, 10.0, 1.0, 0.25, 1.0).with_symbols(1);
    let g = build_frequency_grid(&cfg).unwrap();
    let stream = SymbolStream::from_config(&cfg);
    let times: Vec<f64> = (0..9).map(|i| stream.times[0] - 1.0 + 0.25 * i as f64).collect();
    let plan = SynthesisPlan::new(&g, Pulse::from_config(&cfg), &stream, &times).unwrap();
    let trials = 10_000;
    let samples: Vec<Vec<Complex64>> = (0..trials)
        .map(|t| plan.apply_flat(&sample_composed(&cfg, &g, t).unwrap()).unwrap())
        .collect();
    let want = mean_signal(&cfg, &stream, &times).unwrap();
    let n = trials as f64;
    for (ti, row) in want.values.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            let c = ti * 2 + j;
            let mean = samples.iter().map(|s| s[c]).sum::<Complex64>() / n;
            let var = samples.iter().map(|s| (s[c] - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            // closed form is untruncated; the grid drops 1 − erf(2) ≈ 0.5% of the mass
            let tol = 4.0 * se + 0.006 * w.norm();
            assert!((mean - w).norm() < tol, "t={} j={j}: {mean} vs {w}", times[ti]);
        }
    }
}

#[test]
fn standard_error_shrinks_with_trials() {
    let cfg = ChannelConfig::flat(4, 1, 10.0, 0.5, 1.0, 2.0).with_symbols(2);
    let mean_se2 = |trials: usize| {
        let seeds = 16;
        (0..seeds)
            .map(|s| {
                let e = mc_normalized_variance(&cfg.clone().with_seed(100 + s), trials, None).unwrap();
                e.cell(0, 0).mean_se.powi(2)
            })
            .sum::<f64>()
            / seeds as f64
    };
    let ratio = mean_se2(400) / mean_se2(800);
    assert!((1.5..2.7).contains(&ratio), "{ratio}");
}

#[test]
fn broadband_variance_falls_with_symbol_interval() {
    let mut last = f64::INFINITY;
    for tau in [4.0, 8.0, 16.0] {
        let cfg = ChannelConfig::flat(16, 2, 10.0, 1.0, 1.0 / 16.0, tau).with_seed(3);
        let e = mc_normalized_variance(&cfg, 600, None).unwrap();
        let (v, _) = e.nvar_at(cfg.central_symbol()).unwrap();
        assert!(v < last, "τ={tau}: {v} ≥ {last}");
        last = v;
    }
}

#[test]
fn monte_carlo_agrees_with_model_moments() {
    let cfg = ChannelConfig::flat(6, 2, 10.0, 1.0, 0.25, 2.0).with_pinholes(vec![5, 3]).with_seed(9);
    let model = model_moments(&cfg).unwrap();
    let samples = simulate_trials(&cfg, 4000, None).unwrap();
    let est = VarianceEstimate::from_samples(&samples, 2, "x").unwrap();
    for (m, c) in model.iter().zip(&est.cells) {
        assert!((c.mean - m.mean).norm() < 5.0 * c.mean_se + 1e-9, "{c:?} vs {m:?}");
        assert!((c.var - m.var).abs() < 5.0 * c.var_se, "{} vs {}", c.var, m.var);
    }
}
