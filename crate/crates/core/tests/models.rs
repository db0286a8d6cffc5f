mod common;

use common::{bs_call, call, equity, mean_stderr, one_asset};
use diffpca::datagen::payoff_and_differential;
use diffpca::instruments::Instrument;
use diffpca::models::{Dynamics, EquityModelConfig, Model, ModelConfig, RateModelConfig};
use diffpca::rng::{PathRng, SUB_PAYOFF, SUB_STATE};

#[test]
fn martingale_under_zero_rate() {
    for dynamics in [Dynamics::Lognormal, Dynamics::Normal] {
        let model = equity(EquityModelConfig::uniform(2, 100.0, 0.3, 0.5, dynamics, 0.0));
        for m in [1usize << 12, 1 << 16] {
            let draws: Vec<f64> = (0..m as u64)
                .map(|i| model.simulate_to_exposure(2.0, &mut PathRng::new(3, i, SUB_STATE)).unwrap()[1])
                .collect();
            let (mean, se) = mean_stderr(&draws);
            assert!((mean - 100.0).abs() <= 4.0 * se, "{dynamics:?} m={m}: {mean} +/- {se}");
        }
    }
}

#[test]
fn log_return_correlation() {
    let model = equity(EquityModelConfig::uniform(2, 100.0, 0.2, 0.99, Dynamics::Lognormal, 0.0));
    let m = 1u64 << 15;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..m {
        let x = model.simulate_to_exposure(1.0, &mut PathRng::new(5, i, SUB_STATE)).unwrap();
        a.push((x[0] / 100.0).ln());
        b.push((x[1] / 100.0).ln());
    }
    let (ma, _) = mean_stderr(&a);
    let (mb, _) = mean_stderr(&b);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    let rho = cov / (va * vb).sqrt();
    assert!((rho - 0.99).abs() < 0.01, "rho = {rho}");
}

#[test]
fn european_call_matches_black_scholes() {
    let (rate, vol) = (0.03, 0.25);
    let model = one_asset(vol, rate);
    let inst = call(105.0, 2.0, Some(1e-3));
    let x = [95.0];
    let m = 1u64 << 16;
    let (mut ys, mut zs) = (Vec::new(), Vec::new());
    for j in 0..m {
        let (y, z) = payoff_and_differential(&model, &inst, 1.0, &x, None, &mut PathRng::new(9, 0, 1 + j)).unwrap();
        ys.push(y);
        zs.push(z[0]);
    }
    let (price, delta) = bs_call(95.0, 105.0, rate, vol, 1.0);
    let (my, sy) = mean_stderr(&ys);
    let (mz, sz) = mean_stderr(&zs);
    assert!((my - price).abs() <= 3.0 * sy, "price {my} +/- {sy} vs {price}");
    assert!((mz - delta).abs() <= 3.0 * sz, "delta {mz} +/- {sz} vs {delta}");
}

#[test]
fn forward_is_unbiased_with_pathwise_ratio() {
    let model = one_asset(0.3, 0.0);
    let fwd = Instrument::Forward {
        asset: 0,
        strike: 0.0,
        maturity: 2.0,
    };
    let x = [110.0];
    let (mut ys, mut zs) = (Vec::new(), Vec::new());
    for j in 0..1u64 << 14 {
        let mut rng = PathRng::new(2, 0, 1 + j);
        let (y, z) = payoff_and_differential(&model, &fwd, 1.0, &x, None, &mut rng).unwrap();
        // lognormal: dY/dX = S(T*) / S(T)
        assert!((z[0] - y / x[0]).abs() < 1e-12);
        ys.push(y);
        zs.push(z[0]);
    }
    let (my, sy) = mean_stderr(&ys);
    let (mz, sz) = mean_stderr(&zs);
    assert!((my - 110.0).abs() <= 4.0 * sy);
    assert!((mz - 1.0).abs() <= 4.0 * sz);
}

#[test]
fn zero_vol_basket_is_deterministic() {
    let model = equity(EquityModelConfig::uniform(3, 100.0, 0.0, 0.0, Dynamics::Lognormal, 0.0));
    let w = vec![0.5, 0.3, 0.2];
    let inst = Instrument::BasketCall {
        weights: w.clone(),
        strike: 90.0,
        maturity: 2.0,
        smoothing: None,
    };
    let x = [100.0, 95.0, 80.0];
    let intrinsic = 0.5 * 100.0 + 0.3 * 95.0 + 0.2 * 80.0 - 90.0;
    for j in 0..8 {
        let (y, z) = payoff_and_differential(&model, &inst, 1.0, &x, None, &mut PathRng::new(1, 0, j)).unwrap();
        assert!((y - intrinsic).abs() < 1e-9, "{y}");
        for (a, b) in z.iter().zip(&w) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn spot_measure_reprices_the_initial_curve() {
    // A deep in-the-money receiver swaption is a receiver swap almost surely,
    // whose value today follows from the initial curve alone.
    let cfg = RateModelConfig::five_factor(5.0, 0.5);
    let (expiry, tenor, strike) = (2.0, 3.0, 0.2);
    let mut df = 1.0;
    let mut swap = 0.0;
    for (j, f) in cfg.initial_forwards.iter().enumerate() {
        let start = cfg.tenor_grid[j];
        let delta = cfg.tenor_grid[j + 1] - start;
        df /= 1.0 + delta * f;
        if start >= expiry - 1e-9 && start < expiry + tenor - 1e-9 {
            swap += delta * df * (strike - f);
        }
    }
    let x = cfg.initial_forwards.clone();
    let model = Model::new(ModelConfig::Rates(cfg)).unwrap();
    let inst = Instrument::EuropeanSwaption {
        expiry,
        tenor,
        strike,
        smoothing: Some(1e-8),
    };
    let ys: Vec<f64> = (0..1u64 << 14)
        .map(|j| model.simulate_payoff::<f64>(&x, 0.0, &inst, None, &mut PathRng::new(4, 0, SUB_PAYOFF + j)).unwrap())
        .collect();
    let (mean, se) = mean_stderr(&ys);
    assert!((mean - swap).abs() <= 4.0 * se, "{mean} +/- {se} vs {swap}");
}

#[test]
fn paths_do_not_depend_on_thread_count() {
    let model = Model::new(ModelConfig::Rates(RateModelConfig::five_factor(5.0, 0.5))).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| diffpca::datagen::generate(&model, &swaption(), 1.0, 64, 8).unwrap())
    };
    assert_eq!(run(1), run(3));
}

fn swaption() -> Instrument {
    Instrument::EuropeanSwaption {
        expiry: 2.0,
        tenor: 2.0,
        strike: 0.03,
        smoothing: None,
    }
}

#[test]
fn incompatible_instrument_is_typed() {
    let err = one_asset(0.2, 0.0)
        .simulate_payoff::<f64>(&[100.0], 1.0, &swaption(), None, &mut PathRng::new(1, 0, 1))
        .unwrap_err();
    assert!(matches!(err, diffpca::Error::Incompatible { .. }), "{err}");
    assert!(err.is_config_error());
}
