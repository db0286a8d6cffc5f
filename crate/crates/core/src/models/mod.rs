//! Risk-neutral simulators for the exposure-date state and the post-exposure
//! path.

mod equity;
mod rates;

pub use equity::{Dynamics, EquityModel, EquityModelConfig};
pub use rates::{default_loadings, Measure, RateModel, RateModelConfig, MAX_STEP};

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::instruments::{self, Instrument, Path};
use crate::lsm::ExercisePolicy;
use crate::rng::PathRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Equity(EquityModelConfig),
    Rates(RateModelConfig),
}

/// A validated model.
#[derive(Clone, Debug)]
pub enum Model {
    Equity(EquityModel),
    Rates(RateModel),
}

impl Model {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        Ok(match cfg {
            ModelConfig::Equity(c) => Model::Equity(EquityModel::new(c)?),
            ModelConfig::Rates(c) => Model::Rates(RateModel::new(c)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Equity(m) => ModelConfig::Equity(m.config().clone()),
            Model::Rates(m) => ModelConfig::Rates(m.config().clone()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Equity(_) => "equity",
            Model::Rates(_) => "rates",
        }
    }

    /// Dimension of the state at exposure `t`.
    pub fn state_dim(&self, t: f64) -> Result<usize> {
        match self {
            Model::Equity(m) => Ok(m.n_assets()),
            Model::Rates(m) => Ok(m.n_forwards() - m.exposure_index(t)?),
        }
    }

    /// Human-readable names of the state coordinates at `t`.
    pub fn state_labels(&self, t: f64) -> Result<Vec<String>> {
        match self {
            Model::Equity(m) => Ok((0..m.n_assets()).map(|i| format!("S_{i}")).collect()),
            Model::Rates(m) => m.labels(t),
        }
    }

    /// One draw of the state at `t` (not recorded).
    pub fn simulate_to_exposure(&self, t: f64, rng: &mut PathRng) -> Result<Vec<f64>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::param("exposure", format!("must be finite and >= 0, got {t}")));
        }
        match self {
            Model::Equity(m) => Ok(m.simulate_to_exposure(t, rng)),
            Model::Rates(m) => m.simulate_to_exposure(t, rng),
        }
    }

    /// Pathwise payoff: the instrument's cash-flows after `t`, discounted to
    /// `t`, as a function of the state `x` at `t`. With `R = Var` the
    /// pathwise differential is read off the tape.
    pub fn simulate_payoff<R: Real>(
        &self,
        x: &[R],
        t: f64,
        instrument: &Instrument,
        policy: Option<&ExercisePolicy>,
        rng: &mut PathRng,
    ) -> Result<R> {
        let expected = self.state_dim(t)?;
        if x.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "state",
                expected,
                actual: x.len(),
            });
        }
        let width = instrument.smoothing_width(self, t)?;
        match self {
            Model::Equity(m) => {
                let dates = instrument.equity_event_dates(t)?;
                let path = m.simulate_path(x, t, &dates, rng);
                instruments::cashflows(instrument, &Path::Equity(path), policy, width)
            }
            Model::Rates(m) => {
                let path = m.simulate_path(x, t, rng)?;
                instruments::cashflows(instrument, &Path::Rates(path), policy, width)
            }
        }
    }
}
