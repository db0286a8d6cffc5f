//! Cash-flow definitions, evaluated as differentiable functions of a
//! simulated post-exposure path.
//!
//! Payoff kinks are softened with [`smooth_max`](crate::autodiff::smooth_max)
//! so that pathwise differentials are defined everywhere. Callable
//! instruments exercise according to a frozen [`ExercisePolicy`]; the
//! exercise indicator is treated as locally constant when differentiating.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::lsm::ExercisePolicy;
use crate::models::Model;

/// Default smoothing width as a fraction of the payoff scale.
pub const DEFAULT_SMOOTHING_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Instrument {
    /// Long one unit of `asset` at `maturity` for `strike`.
    Forward { asset: usize, strike: f64, maturity: f64 },
    /// `max(w . S(T*) - K, 0)`.
    BasketCall {
        weights: Vec<f64>,
        strike: f64,
        maturity: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smoothing: Option<f64>,
    },
    /// `max(S_1(T*) - S_0(T*) - K, 0)`.
    SpreadCall {
        strike: f64,
        maturity: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smoothing: Option<f64>,
    },
    /// Basket call minus `hedge[i]` forwards on asset `i`, struck at the
    /// inception forward price.
    DeltaHedgedCall {
        weights: Vec<f64>,
        strike: f64,
        hedge: Vec<f64>,
        maturity: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smoothing: Option<f64>,
    },
    /// Put on one asset exercisable on `call_dates`.
    BermudanPut {
        asset: usize,
        strike: f64,
        call_dates: Vec<f64>,
    },
    /// Right to enter, on any call date, a swap receiving `fixed_rate` until
    /// `final_maturity`.
    BermudanReceiver {
        call_dates: Vec<f64>,
        fixed_rate: f64,
        final_maturity: f64,
    },
    /// Receiver swaption expiring at `expiry` on a swap of length `tenor`.
    EuropeanSwaption {
        expiry: f64,
        tenor: f64,
        strike: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smoothing: Option<f64>,
    },
}

/// Spots at each event date after exposure.
#[derive(Clone, Debug)]
pub struct EquityPath<R> {
    pub exposure: f64,
    pub dates: Vec<f64>,
    pub spots: Vec<Vec<R>>,
    /// Discount factor from each date back to exposure.
    pub discount: Vec<f64>,
    pub initial_spots: Vec<f64>,
    pub rate: f64,
}

/// Forward curve snapshots at every grid date from exposure on.
#[derive(Clone, Debug)]
pub struct RatePath<'a, R> {
    /// Grid index of the exposure date.
    pub first: usize,
    pub grid: &'a [f64],
    pub deltas: &'a [f64],
    /// `curves[k]` holds forwards `first + k ..N` observed at `T_{first + k}`.
    pub curves: Vec<Vec<R>>,
    /// `B(T) / B(T_{first + k})` for `k = 0..=N - first`.
    pub discount: Vec<R>,
}

#[derive(Clone, Debug)]
pub enum Path<'a, R> {
    Equity(EquityPath<R>),
    Rates(RatePath<'a, R>),
}

fn grid_index(grid: &[f64], t: f64) -> Option<usize> {
    grid.iter().position(|g| (g - t).abs() < 1e-9)
}

/// Value at `T_c` of a receiver swap from `T_c` to `T_e`, from the forwards
/// `c..` observed at `T_c`.
fn receiver_swap<R: Real>(curve: &[R], deltas: &[f64], c: usize, e: usize, fixed: f64) -> R {
    let mut df = R::from(1.0);
    let mut value = R::from(0.0);
    for j in c..e {
        let f = curve[j - c];
        df = df / (f * deltas[j] + 1.0);
        value += (-f + fixed) * df * deltas[j];
    }
    value
}

/// Par rate at `T_c` of a swap from `T_c` to `T_e`, from the forwards `c..`
/// observed at `T_c`.
pub fn par_swap_rate<R: Real>(curve: &[R], deltas: &[f64], c: usize, e: usize) -> R {
    let mut df = R::from(1.0);
    let mut annuity = R::from(0.0);
    for j in c..e {
        df = df / (curve[j - c] * deltas[j] + 1.0);
        annuity += df * deltas[j];
    }
    (-df + 1.0) / annuity
}

impl Instrument {
    pub fn name(&self) -> &'static str {
        match self {
            Instrument::Forward { .. } => "forward",
            Instrument::BasketCall { .. } => "basket_call",
            Instrument::SpreadCall { .. } => "spread_call",
            Instrument::DeltaHedgedCall { .. } => "delta_hedged_call",
            Instrument::BermudanPut { .. } => "bermudan_put",
            Instrument::BermudanReceiver { .. } => "bermudan_receiver",
            Instrument::EuropeanSwaption { .. } => "european_swaption",
        }
    }

    pub fn is_callable(&self) -> bool {
        matches!(self, Instrument::BermudanPut { .. } | Instrument::BermudanReceiver { .. })
    }

    pub fn call_dates(&self) -> &[f64] {
        match self {
            Instrument::BermudanPut { call_dates, .. } | Instrument::BermudanReceiver { call_dates, .. } => call_dates,
            _ => &[],
        }
    }

    /// Same instrument with a different call schedule (callables only).
    pub fn with_call_dates(&self, dates: Vec<f64>) -> Self {
        let mut out = self.clone();
        match &mut out {
            Instrument::BermudanPut { call_dates, .. } | Instrument::BermudanReceiver { call_dates, .. } => {
                *call_dates = dates
            }
            _ => {}
        }
        out
    }

    pub fn smoothing(&self) -> Option<f64> {
        match self {
            Instrument::BasketCall { smoothing, .. }
            | Instrument::SpreadCall { smoothing, .. }
            | Instrument::DeltaHedgedCall { smoothing, .. }
            | Instrument::EuropeanSwaption { smoothing, .. } => *smoothing,
            _ => None,
        }
    }

    pub fn with_smoothing(&self, width: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Instrument::BasketCall { smoothing, .. }
            | Instrument::SpreadCall { smoothing, .. }
            | Instrument::DeltaHedgedCall { smoothing, .. }
            | Instrument::EuropeanSwaption { smoothing, .. } => *smoothing = Some(width),
            _ => {}
        }
        out
    }

    fn incompatible(&self, model: &Model) -> Error {
        Error::Incompatible {
            instrument: self.name(),
            model: model.kind(),
        }
    }

    /// Checks the instrument against a model.
    pub fn validate(&self, model: &Model) -> Result<()> {
        if let Some(w) = self.smoothing() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::config("smoothing", "must be positive"));
            }
        }
        let dates = self.call_dates();
        if dates.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("call_dates", "must be strictly increasing"));
        }
        match (self, model) {
            (Instrument::Forward { asset, .. }, Model::Equity(m)) | (Instrument::BermudanPut { asset, .. }, Model::Equity(m)) => {
                if *asset >= m.n_assets() {
                    return Err(Error::config("asset", format!("index {asset} out of range")));
                }
            }
            (Instrument::BasketCall { weights, .. }, Model::Equity(m)) => check_weights(weights, m.n_assets())?,
            (Instrument::DeltaHedgedCall { weights, hedge, .. }, Model::Equity(m)) => {
                check_weights(weights, m.n_assets())?;
                if hedge.len() != m.n_assets() || hedge.iter().any(|h| !h.is_finite()) {
                    return Err(Error::config("hedge", format!("expected {} finite entries", m.n_assets())));
                }
            }
            (Instrument::SpreadCall { .. }, Model::Equity(m)) => {
                if m.n_assets() < 2 {
                    return Err(Error::config("n_assets", "spread option needs two assets"));
                }
            }
            (Instrument::BermudanReceiver { call_dates, final_maturity, .. }, Model::Rates(m)) => {
                let e = grid_index(m.grid(), *final_maturity)
                    .ok_or_else(|| Error::config("final_maturity", "must be a grid date"))?;
                for d in call_dates {
                    match grid_index(m.grid(), *d) {
                        Some(c) if c < e => {}
                        _ => return Err(Error::config("call_dates", format!("{d} is not a grid date before maturity"))),
                    }
                }
            }
            (Instrument::EuropeanSwaption { expiry, tenor, .. }, Model::Rates(m)) => {
                let c = grid_index(m.grid(), *expiry).ok_or_else(|| Error::config("expiry", "must be a grid date"))?;
                match grid_index(m.grid(), expiry + tenor) {
                    Some(e) if e > c => {}
                    _ => return Err(Error::config("tenor", "swap end must be a later grid date")),
                }
            }
            _ => return Err(self.incompatible(model)),
        }
        Ok(())
    }

    /// Simulation dates after exposure `t` for equity instruments.
    pub(crate) fn equity_event_dates(&self, t: f64) -> Result<Vec<f64>> {
        match self {
            Instrument::Forward { maturity, .. }
            | Instrument::BasketCall { maturity, .. }
            | Instrument::SpreadCall { maturity, .. }
            | Instrument::DeltaHedgedCall { maturity, .. } => {
                if *maturity > t {
                    Ok(vec![*maturity])
                } else {
                    Err(Error::param("exposure", format!("maturity {maturity} is not after exposure {t}")))
                }
            }
            Instrument::BermudanPut { call_dates, .. } => Ok(call_dates.iter().copied().filter(|d| *d > t).collect()),
            _ => Err(Error::Incompatible {
                instrument: self.name(),
                model: "equity",
            }),
        }
    }

    /// Smoothing width in payoff units: the configured value, or
    /// [`DEFAULT_SMOOTHING_FRACTION`] of the payoff scale (the standard
    /// deviation of the kinked underlying seen from today).
    pub fn smoothing_width(&self, model: &Model, _t: f64) -> Result<f64> {
        if let Some(w) = self.smoothing() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::config("smoothing", "must be positive"));
            }
            return Ok(w);
        }
        let (scale, fallback) = match (self, model) {
            (Instrument::BasketCall { weights, strike, maturity, .. }, Model::Equity(m))
            | (Instrument::DeltaHedgedCall { weights, strike, maturity, .. }, Model::Equity(m)) => {
                let level: f64 = weights.iter().zip(&m.config().spots).map(|(w, s)| (w * s).abs()).sum();
                (m.linear_sd(weights, *maturity), level + strike.abs())
            }
            (Instrument::SpreadCall { strike, maturity, .. }, Model::Equity(m)) => {
                let mut w = vec![0.0; m.n_assets()];
                if w.len() >= 2 {
                    w[0] = -1.0;
                    w[1] = 1.0;
                }
                let level = m.config().spots.iter().take(2).sum::<f64>();
                (m.linear_sd(&w, *maturity), level + strike.abs())
            }
            (Instrument::EuropeanSwaption { expiry, tenor, .. }, Model::Rates(m)) => {
                let grid = m.grid();
                let f0 = &m.config().initial_forwards;
                let (c, e) = (grid_index(grid, *expiry).unwrap_or(0), grid_index(grid, expiry + tenor).unwrap_or(0));
                let mut df = 1.0;
                let mut annuity = 0.0;
                for (j, f) in f0.iter().enumerate().take(e) {
                    df /= 1.0 + m.deltas()[j] * f;
                    if j >= c {
                        annuity += m.deltas()[j] * df;
                    }
                }
                (annuity * m.rms_vol() * expiry.sqrt(), annuity)
            }
            _ => (1.0, 1.0),
        };
        let scale = if scale > 0.0 { scale } else { 1e-10 * fallback.max(1e-300) };
        Ok(DEFAULT_SMOOTHING_FRACTION * scale)
    }

    /// Exercise value of a callable at one of its call dates, from the state
    /// observed on that date.
    pub fn intrinsic(&self, model: &Model, date: f64, state: &[f64]) -> Result<f64> {
        match (self, model) {
            (Instrument::BermudanPut { asset, strike, .. }, Model::Equity(_)) => Ok(strike - state[*asset]),
            (Instrument::BermudanReceiver { fixed_rate, final_maturity, .. }, Model::Rates(m)) => {
                let c = m.exposure_index(date)?;
                let e = grid_index(m.grid(), *final_maturity).ok_or_else(|| Error::config("final_maturity", "must be a grid date"))?;
                Ok(receiver_swap(state, m.deltas(), c, e, *fixed_rate))
            }
            _ => Err(self.incompatible(model)),
        }
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::config("weights", format!("expected {n} entries, got {}", weights.len())));
    }
    if weights.iter().any(|w| !w.is_finite()) || weights.iter().all(|w| *w == 0.0) {
        return Err(Error::config("weights", "must be finite and not all zero"));
    }
    Ok(())
}

fn require_policy(policy: Option<&ExercisePolicy>) -> Result<&ExercisePolicy> {
    policy.ok_or(Error::MissingPolicy)
}

/// Sum of the instrument's cash-flows along `path`, discounted to exposure.
pub fn cashflows<R: Real>(instrument: &Instrument, path: &Path<'_, R>, policy: Option<&ExercisePolicy>, width: f64) -> Result<R> {
    match (instrument, path) {
        (Instrument::Forward { asset, strike, .. }, Path::Equity(p)) => Ok((p.spots[0][*asset] - *strike) * p.discount[0]),
        (Instrument::BasketCall { weights, strike, .. }, Path::Equity(p)) => {
            let u: R = p.spots[0].iter().zip(weights).map(|(s, w)| *s * *w).sum();
            Ok((u - *strike).soft_max(R::from(0.0), width) * p.discount[0])
        }
        (Instrument::SpreadCall { strike, .. }, Path::Equity(p)) => {
            let s = &p.spots[0];
            if s.len() < 2 {
                return Err(Error::config("n_assets", "spread option needs two assets"));
            }
            Ok((s[1] - s[0] - *strike).soft_max(R::from(0.0), width) * p.discount[0])
        }
        (Instrument::DeltaHedgedCall { weights, strike, hedge, maturity, .. }, Path::Equity(p)) => {
            let s = &p.spots[0];
            let u: R = s.iter().zip(weights).map(|(s, w)| *s * *w).sum();
            let call = (u - *strike).soft_max(R::from(0.0), width);
            let growth = (p.rate * maturity).exp();
            let hedges: R = s
                .iter()
                .zip(hedge)
                .zip(&p.initial_spots)
                .map(|((s, h), s0)| (*s - s0 * growth) * *h)
                .sum();
            Ok((call - hedges) * p.discount[0])
        }
        (Instrument::BermudanPut { asset, strike, .. }, Path::Equity(p)) => {
            let policy = require_policy(policy)?;
            for (k, &date) in p.dates.iter().enumerate() {
                let state: Vec<f64> = p.spots[k].iter().map(|v| v.value()).collect();
                let intrinsic = strike - state[*asset];
                if policy.exercise(date, &state, intrinsic)? {
                    return Ok((-p.spots[k][*asset] + *strike) * p.discount[k]);
                }
            }
            Ok(R::from(0.0))
        }
        (Instrument::BermudanReceiver { call_dates, fixed_rate, final_maturity }, Path::Rates(p)) => {
            let policy = require_policy(policy)?;
            let exposure = p.grid[p.first];
            let e = grid_index(p.grid, *final_maturity).ok_or_else(|| Error::config("final_maturity", "must be a grid date"))?;
            for &date in call_dates.iter().filter(|d| **d > exposure + 1e-9) {
                let c = grid_index(p.grid, date).ok_or_else(|| Error::config("call_dates", "must be grid dates"))?;
                let curve = &p.curves[c - p.first];
                let swap = receiver_swap(curve, p.deltas, c, e, *fixed_rate);
                let state: Vec<f64> = curve.iter().map(|v| v.value()).collect();
                if policy.exercise(date, &state, swap.value())? {
                    return Ok(swap * p.discount[c - p.first]);
                }
            }
            Ok(R::from(0.0))
        }
        (Instrument::EuropeanSwaption { expiry, tenor, strike, .. }, Path::Rates(p)) => {
            let c = grid_index(p.grid, *expiry).ok_or_else(|| Error::config("expiry", "must be a grid date"))?;
            if c < p.first {
                return Err(Error::param("exposure", "swaption expired before exposure"));
            }
            let e = grid_index(p.grid, expiry + tenor).ok_or_else(|| Error::config("tenor", "swap end must be a grid date"))?;
            let swap = receiver_swap(&p.curves[c - p.first], p.deltas, c, e, *strike);
            Ok(swap.soft_max(R::from(0.0), width) * p.discount[c - p.first])
        }
        (i, Path::Equity(_)) => Err(Error::Incompatible {
            instrument: i.name(),
            model: "equity",
        }),
        (i, Path::Rates(_)) => Err(Error::Incompatible {
            instrument: i.name(),
            model: "rates",
        }),
    }
}
