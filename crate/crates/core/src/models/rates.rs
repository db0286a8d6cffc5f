//! Gaussian (normal-volatility) discrete forward-rate model under the spot
//! measure.
//!
//! The tenor grid `0 = T_0 < T_1 < ... < T_N` defines `N` forwards; forward
//! `j` covers `[T_j, T_{j+1}]` with accrual `T_{j+1} - T_j` and fixes at `T_j`.
//! Each forward evolves as
//!
//! ```text
//! dF_k = sigma_k . ( sum_{j = eta(t)}^{k} delta_j sigma_j / (1 + delta_j F_j) ) dt + sigma_k . dW
//! ```
//!
//! where `sigma_k` is the row of factor loadings of forward `k` and `eta(t)` is
//! the first forward not yet fixed. The numeraire is the discretely rolled
//! bank account `B(T_k) = prod_{j<k} (1 + delta_j F_j(T_j))`. Euler steps are
//! taken on the grid with sub-steps no longer than [`MAX_STEP`].

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::instruments::RatePath;
use crate::rng::PathRng;

/// Largest Euler step, in years.
pub const MAX_STEP: f64 = 0.25;

const GRID_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    Spot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateModelConfig {
    /// Grid boundaries `T_0 = 0 < T_1 < ... < T_N`, in years.
    pub tenor_grid: Vec<f64>,
    /// The `N` initial forwards.
    pub initial_forwards: Vec<f64>,
    pub n_factors: usize,
    /// `N x n_factors` normal-volatility loadings. When absent the default
    /// parametric loadings of [`default_loadings`] are used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loadings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub measure: Measure,
}

/// Level, slope, curvature and two short-end humps, in normal-vol units per
/// root year, evaluated at each forward's fixing date.
pub fn default_loadings(tenor_grid: &[f64], n_factors: usize) -> Result<Vec<Vec<f64>>> {
    if n_factors == 0 || n_factors > 5 {
        return Err(Error::config(
            "n_factors",
            format!("default loadings support 1 to 5 factors, got {n_factors}"),
        ));
    }
    let n = tenor_grid.len().saturating_sub(1);
    let last = tenor_grid.get(n.saturating_sub(1)).copied().unwrap_or(0.0).max(1e-12);
    Ok((0..n)
        .map(|j| {
            let t = tenor_grid[j];
            let u = t / last;
            let shapes = [
                0.0070,
                0.0030 * (1.0 - 2.0 * u),
                0.0015 * (1.0 - 6.0 * u + 6.0 * u * u),
                0.0020 * t * (1.0 - t).exp(),
                0.0015 * (t / 3.0) * (1.0 - t / 3.0).exp(),
            ];
            shapes[..n_factors].to_vec()
        })
        .collect())
}

impl RateModelConfig {
    /// Five-factor model on a regular grid with a gently upward-sloping curve.
    pub fn five_factor(maturity: f64, accrual: f64) -> Self {
        let n = (maturity / accrual).round() as usize;
        let tenor_grid: Vec<f64> = (0..=n).map(|i| i as f64 * accrual).collect();
        let initial_forwards = tenor_grid[..n]
            .iter()
            .map(|t| 0.025 + 0.01 * (1.0 - (-t / 3.0).exp()))
            .collect();
        Self {
            tenor_grid,
            initial_forwards,
            n_factors: 5,
            loadings: None,
            measure: Measure::Spot,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RateModel {
    cfg: RateModelConfig,
    deltas: Vec<f64>,
    /// `N x F`, row-major.
    loadings: Vec<f64>,
    n_factors: usize,
}

impl RateModel {
    pub fn new(cfg: RateModelConfig) -> Result<Self> {
        let grid = &cfg.tenor_grid;
        if grid.len() < 2 {
            return Err(Error::config("tenor_grid", "needs at least two dates"));
        }
        if grid[0].abs() > GRID_TOL {
            return Err(Error::config("tenor_grid", "must start at 0"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::config("tenor_grid", "must be finite and strictly increasing"));
        }
        let n = grid.len() - 1;
        if cfg.initial_forwards.len() != n {
            return Err(Error::config(
                "initial_forwards",
                format!("expected {n} entries, got {}", cfg.initial_forwards.len()),
            ));
        }
        if cfg.initial_forwards.iter().any(|f| !f.is_finite()) {
            return Err(Error::config("initial_forwards", "must be finite"));
        }
        if cfg.n_factors == 0 {
            return Err(Error::config("n_factors", "must be at least 1"));
        }
        let rows = match &cfg.loadings {
            Some(l) => l.clone(),
            None => default_loadings(grid, cfg.n_factors)?,
        };
        if rows.len() != n || rows.iter().any(|r| r.len() != cfg.n_factors) {
            return Err(Error::config("loadings", format!("must be {n}x{}", cfg.n_factors)));
        }
        for (j, r) in rows.iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("loadings", format!("row {j} is not finite")));
            }
        }
        let deltas = grid.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            deltas,
            loadings: rows.concat(),
            n_factors: cfg.n_factors,
            cfg,
        })
    }

    pub fn config(&self) -> &RateModelConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &[f64] {
        &self.cfg.tenor_grid
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn n_forwards(&self) -> usize {
        self.deltas.len()
    }

    /// True when the loadings are identically zero (deterministic curve).
    pub fn is_deterministic(&self) -> bool {
        self.loadings.iter().all(|v| *v == 0.0)
    }

    pub fn loading(&self, k: usize) -> &[f64] {
        &self.loadings[k * self.n_factors..(k + 1) * self.n_factors]
    }

    /// Index of grid date `t`, if `t` lies on the grid.
    pub fn grid_index(&self, t: f64) -> Option<usize> {
        self.cfg.tenor_grid.iter().position(|g| (g - t).abs() < GRID_TOL)
    }

    /// Grid index of an exposure date: must be on the grid with at least one
    /// live forward.
    pub fn exposure_index(&self, t: f64) -> Result<usize> {
        match self.grid_index(t) {
            Some(c) if c < self.n_forwards() => Ok(c),
            _ => Err(Error::param(
                "exposure",
                format!("{t} is not a grid date with live forwards"),
            )),
        }
    }

    /// Evolves forwards `j+1..N` (stored at `fwd[k - offset]`) over
    /// `[T_j, T_{j+1}]`.
    fn evolve_period<R: Real>(&self, fwd: &mut [R], offset: usize, j: usize, rng: &mut PathRng) {
        let n = self.n_forwards();
        let f = self.n_factors;
        let t0 = self.cfg.tenor_grid[j];
        let t1 = self.cfg.tenor_grid[j + 1];
        let n_sub = ((t1 - t0) / MAX_STEP - 1e-12).ceil().max(1.0) as usize;
        let dt = (t1 - t0) / n_sub as f64;
        let sqdt = dt.sqrt();
        let mut dw = vec![0.0; f];
        for _ in 0..n_sub {
            rng.fill_normal(&mut dw);
            let mut acc: Vec<R> = vec![R::from(0.0); f];
            let mut drifts: Vec<R> = Vec::with_capacity(n - j - 1);
            for k in j + 1..n {
                let sk = self.loading(k);
                let weight = (fwd[k - offset] * self.deltas[k] + 1.0).powi(-1) * self.deltas[k];
                for (a, s) in acc.iter_mut().zip(sk) {
                    *a += weight * *s;
                }
                let mu: R = acc.iter().zip(sk).map(|(a, s)| *a * *s).sum();
                drifts.push(mu);
            }
            for (i, k) in (j + 1..n).enumerate() {
                let shock: f64 = self.loading(k).iter().zip(&dw).map(|(s, w)| s * w).sum::<f64>() * sqdt;
                fwd[k - offset] = fwd[k - offset] + drifts[i] * dt + shock;
            }
        }
    }

    pub fn simulate_to_exposure(&self, t: f64, rng: &mut PathRng) -> Result<Vec<f64>> {
        let c = self.exposure_index(t)?;
        let mut fwd = self.cfg.initial_forwards.clone();
        for j in 0..c {
            self.evolve_period(&mut fwd, 0, j, rng);
        }
        Ok(fwd[c..].to_vec())
    }

    /// Simulates the forward curve at every grid date from exposure `t`
    /// onward, starting from the live forwards `x`.
    pub(crate) fn simulate_path<R: Real>(&self, x: &[R], t: f64, rng: &mut PathRng) -> Result<RatePath<'_, R>> {
        let first = self.exposure_index(t)?;
        let n = self.n_forwards();
        if x.len() != n - first {
            return Err(Error::DimensionMismatch {
                context: "rate state",
                expected: n - first,
                actual: x.len(),
            });
        }
        let mut fwd = x.to_vec();
        let mut curves = Vec::with_capacity(n - first);
        let mut discount = Vec::with_capacity(n - first + 1);
        curves.push(fwd.clone());
        discount.push(R::from(1.0));
        for j in first..n {
            let fix = fwd[j - first];
            let last = *discount.last().unwrap();
            discount.push(last / (fix * self.deltas[j] + 1.0));
            if j + 1 < n {
                self.evolve_period(&mut fwd, first, j, rng);
                curves.push(fwd[j + 1 - first..].to_vec());
            }
        }
        Ok(RatePath {
            first,
            grid: &self.cfg.tenor_grid,
            deltas: &self.deltas,
            curves,
            discount,
        })
    }

    /// Root-mean-square total normal volatility across forwards.
    pub(crate) fn rms_vol(&self) -> f64 {
        let n = self.n_forwards();
        let s: f64 = (0..n).map(|k| self.loading(k).iter().map(|v| v * v).sum::<f64>()).sum();
        (s / n as f64).sqrt()
    }

    pub fn labels(&self, t: f64) -> Result<Vec<String>> {
        let c = self.exposure_index(t)?;
        Ok(self.cfg.tenor_grid[c..self.n_forwards()]
            .iter()
            .map(|t| format!("F_{t}"))
            .collect())
    }
}
