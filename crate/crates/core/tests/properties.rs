use num_complex::Complex64;
use proptest::prelude::*;
use trmimo::channel::ChannelConfig;
use trmimo::config::{emit, parse_config, AxisValue, Command, ExperimentSpec, SweepAxis};
use trmimo::infotheory::{sinr_bbfs, sinr_nbfn};
use trmimo::moments::{neff, second_moment_flat, wick_exact, MomentSpec};

proptest! {
    #[test]
    fn neff_bounded_by_smallest_dimension(n in 1usize..500, ks in prop::collection::vec(1usize..500, 0..5)) {
        let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        let (ne, kp) = neff(n as f64, &kf);
        let smallest = ks.iter().copied().chain([n]).min().unwrap() as f64;
        prop_assert!(ne <= smallest * (1.0 + 1e-12));
        prop_assert!(ne >= smallest / (ks.len() + 1) as f64 * (1.0 - 1e-12));
        match kp {
            None => prop_assert!(ks.is_empty()),
            Some(k) => prop_assert!(k >= ne),
        }
    }

    #[test]
    fn sinr_never_exceeds_either_limit(
        ne in 0.1f64..1e4, m in 1.0f64..16.0, c in 0.01f64..10.0,
        b in 0.01f64..10.0, nu in 1e-3f64..10.0, p in 1e-3f64..1e4,
    ) {
        let snr = p / (nu * m * c);
        let s = sinr_bbfs(ne, m, c, b, nu, p).unwrap();
        prop_assert!(s <= (ne * b / (m * c)).min(snr) * (1.0 + 1e-12));
        let s = sinr_nbfn(ne, m, c, nu, p).unwrap();
        prop_assert!(s <= (ne / m).min(snr) * (1.0 + 1e-12));
    }

    #[test]
    fn sinr_depends_on_power_over_noise(ne in 0.1f64..1e3, nu in 1e-3f64..10.0, p in 1e-3f64..1e4, a in 1e-3f64..1e3) {
        let x = sinr_bbfs(ne, 2.0, 0.5, 1.0, nu, p).unwrap();
        let y = sinr_bbfs(ne, 2.0, 0.5, 1.0, nu * a, p * a).unwrap();
        prop_assert!((x - y).abs() <= 1e-10 * x);
        let x = sinr_nbfn(ne, 2.0, 0.5, nu, p).unwrap();
        let y = sinr_nbfn(ne, 2.0, 0.5, nu * a, p * a).unwrap();
        prop_assert!((x - y).abs() <= 1e-10 * x);
    }

    #[test]
    fn wick_symmetric_under_layer_permutation(
        n in 1usize..6, m in 1usize..4,
        layers in prop::collection::vec((1usize..6, 0.2f64..3.0), 1..4),
        rot in 0usize..4,
    ) {
        let sym: Vec<Complex64> = (0..m).map(|i| Complex64::from_polar(1.0 + i as f64, 0.3 * i as f64)).collect();
        let build = |ls: &[(usize, f64)]| MomentSpec {
            n_tx: n,
            pinholes: ls.iter().map(|l| l.0).collect(),
            n_rx: m,
            // variance of the stage leaving each pinhole layer moves with it
            variances: std::iter::once(1.3).chain(ls.iter().map(|l| l.1)).collect(),
            symbols: sym.clone(),
            receiver: 0,
        };
        let mut rotated = layers.clone();
        let k = rot % layers.len();
        rotated.rotate_left(k);
        let a = wick_exact(&build(&layers)).unwrap().value;
        let b = wick_exact(&build(&rotated)).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10 * a, "{} vs {}", a, b);
    }

    #[test]
    fn flat_oracle_matches_closed_form(n in 1usize..6, m in 1usize..6, seed in any::<u64>()) {
        let sym: Vec<Complex64> = (0..m)
            .map(|i| {
                let h = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(7 * i as u32 + 1);
                Complex64::new((h % 1000) as f64 / 250.0 - 2.0, ((h >> 20) % 1000) as f64 / 250.0 - 2.0)
            })
            .collect();
        let spec = MomentSpec { n_tx: n, pinholes: vec![], n_rx: m, variances: vec![1.0], symbols: sym.clone(), receiver: m - 1 };
        let w = wick_exact(&spec).unwrap().value;
        let c = second_moment_flat(n, &sym, m - 1);
        prop_assert!((w - c).abs() <= 1e-10 * c.max(1e-300));
    }

    #[test]
    fn config_round_trips(
        n in 1usize..200, m in 1usize..8, ks in prop::collection::vec(1usize..50, 0..3),
        b in 0.01f64..1.0, beta in 0.01f64..2.0, seed in 0..=i64::MAX as u64, trials in 100usize..10_000,
        workers in prop::option::of(1usize..16), sweep in prop::collection::vec(1usize..100, 0..4),
    ) {
        let mut cfg = ChannelConfig::flat(n, m, 10.0, b, beta, 1.0 / b).with_pinholes(ks).with_seed(seed);
        cfg.noise_power = 0.25;
        let mut spec = ExperimentSpec::new(Command::Sweep, cfg);
        spec.trials = trials;
        spec.workers = workers;
        if !sweep.is_empty() {
            spec.sweep.axes.push(SweepAxis {
                parameter: "n_tx".into(),
                values: sweep.iter().map(|&x| AxisValue::Number(x as f64)).collect(),
            });
        }
        let back = parse_config(&emit(&spec)).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn oversized_seed_is_a_violation(seed in (i64::MAX as u64 + 1)..=u64::MAX) {
        let cfg = ChannelConfig::flat(4, 2, 10.0, 1.0, 2.0, 1.0).with_seed(seed);
        prop_assert!(cfg.validate().is_err());
    }
}
