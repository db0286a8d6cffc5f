#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

use diffpca::instruments::Instrument;
use diffpca::models::{Dynamics, EquityModelConfig, Model, ModelConfig};

fn n_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Black-Scholes call price and delta.
pub fn bs_call(spot: f64, strike: f64, rate: f64, vol: f64, tau: f64) -> (f64, f64) {
    let sd = vol * tau.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * tau) / sd;
    let d2 = d1 - sd;
    (spot * n_cdf(d1) - strike * (-rate * tau).exp() * n_cdf(d2), n_cdf(d1))
}

pub fn bs_put(spot: f64, strike: f64, rate: f64, vol: f64, tau: f64) -> f64 {
    let (call, _) = bs_call(spot, strike, rate, vol, tau);
    call - spot + strike * (-rate * tau).exp()
}

pub fn equity(cfg: EquityModelConfig) -> Model {
    Model::new(ModelConfig::Equity(cfg)).unwrap()
}

pub fn one_asset(vol: f64, rate: f64) -> Model {
    equity(EquityModelConfig::uniform(1, 100.0, vol, 0.0, Dynamics::Lognormal, rate))
}

pub fn call(strike: f64, maturity: f64, smoothing: Option<f64>) -> Instrument {
    Instrument::BasketCall {
        weights: vec![1.0],
        strike,
        maturity,
        smoothing,
    }
}

pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}
