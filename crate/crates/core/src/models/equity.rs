use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::instruments::EquityPath;
use crate::rng::PathRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Black-Scholes: `dS = r S dt + vol S dW`.
    Lognormal,
    /// Bachelier: `dS = r S dt + vol S(0) dW`, i.e. `vols` are quoted relative
    /// to the initial spots and the absolute volatility is constant.
    Normal,
}

/// Correlated multi-asset model under the risk-neutral measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquityModelConfig {
    pub n_assets: usize,
    pub spots: Vec<f64>,
    pub vols: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
    pub dynamics: Dynamics,
    pub rate: f64,
}

impl EquityModelConfig {
    /// Equal-vol, equal-correlation model.
    pub fn uniform(n_assets: usize, spot: f64, vol: f64, rho: f64, dynamics: Dynamics, rate: f64) -> Self {
        let correlation = (0..n_assets)
            .map(|i| (0..n_assets).map(|j| if i == j { 1.0 } else { rho }).collect())
            .collect();
        Self {
            n_assets,
            spots: vec![spot; n_assets],
            vols: vec![vol; n_assets],
            correlation,
            dynamics,
            rate,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquityModel {
    cfg: EquityModelConfig,
    /// Lower Cholesky factor of the correlation, row-major.
    chol: Vec<f64>,
}

const CHOLESKY_TOL: f64 = 1e-12;

/// Cholesky factor of a positive semi-definite matrix; pivots within
/// `CHOLESKY_TOL` of zero produce a zero column.
fn cholesky_psd(a: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -CHOLESKY_TOL {
            return None;
        }
        let ljj = if d > CHOLESKY_TOL { d.sqrt() } else { 0.0 };
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if ljj > 0.0 {
                l[i * n + j] = s / ljj;
            } else if s.abs() > 1e-10 {
                return None;
            }
        }
    }
    Some(l)
}

impl EquityModel {
    pub fn new(cfg: EquityModelConfig) -> Result<Self> {
        let n = cfg.n_assets;
        if n == 0 {
            return Err(Error::config("n_assets", "must be at least 1"));
        }
        if cfg.spots.len() != n {
            return Err(Error::config("spots", format!("expected {n} entries, got {}", cfg.spots.len())));
        }
        if cfg.vols.len() != n {
            return Err(Error::config("vols", format!("expected {n} entries, got {}", cfg.vols.len())));
        }
        if cfg.vols.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("vols", "must be finite and non-negative"));
        }
        if cfg.spots.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("spots", "must be finite"));
        }
        if cfg.dynamics == Dynamics::Lognormal && cfg.spots.iter().any(|s| *s <= 0.0) {
            return Err(Error::config("spots", "must be positive under lognormal dynamics"));
        }
        if !cfg.rate.is_finite() {
            return Err(Error::config("rate", "must be finite"));
        }
        let c = &cfg.correlation;
        if c.len() != n || c.iter().any(|r| r.len() != n) {
            return Err(Error::config("correlation", format!("must be {n}x{n}")));
        }
        for i in 0..n {
            if (c[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::config("correlation", "diagonal must be 1"));
            }
            for j in 0..i {
                if !c[i][j].is_finite() || (c[i][j] - c[j][i]).abs() > 1e-12 {
                    return Err(Error::config("correlation", "must be symmetric and finite"));
                }
            }
        }
        let chol = cholesky_psd(c).ok_or_else(|| Error::config("correlation", "not positive semi-definite"))?;
        Ok(Self { cfg, chol })
    }

    pub fn config(&self) -> &EquityModelConfig {
        &self.cfg
    }

    pub fn n_assets(&self) -> usize {
        self.cfg.n_assets
    }

    fn correlated_normals(&self, rng: &mut PathRng) -> Vec<f64> {
        let n = self.cfg.n_assets;
        let mut xi = vec![0.0; n];
        rng.fill_normal(&mut xi);
        (0..n)
            .map(|i| (0..=i).map(|k| self.chol[i * n + k] * xi[k]).sum())
            .collect()
    }

    /// Exact transition of all spots over `dt`.
    pub(crate) fn step<R: Real>(&self, spots: &mut [R], dt: f64, rng: &mut PathRng) {
        let eps = self.correlated_normals(rng);
        let r = self.cfg.rate;
        match self.cfg.dynamics {
            Dynamics::Lognormal => {
                for ((s, &vol), e) in spots.iter_mut().zip(&self.cfg.vols).zip(eps) {
                    let growth = ((r - 0.5 * vol * vol) * dt + vol * dt.sqrt() * e).exp();
                    *s = *s * growth;
                }
            }
            Dynamics::Normal => {
                let carry = (r * dt).exp();
                let sd = if r.abs() < 1e-12 {
                    dt.sqrt()
                } else {
                    (((2.0 * r * dt).exp() - 1.0) / (2.0 * r)).sqrt()
                };
                for (i, (s, e)) in spots.iter_mut().zip(eps).enumerate() {
                    let abs_vol = self.cfg.vols[i] * self.cfg.spots[i];
                    *s = *s * carry + abs_vol * sd * e;
                }
            }
        }
    }

    pub fn simulate_to_exposure(&self, t: f64, rng: &mut PathRng) -> Vec<f64> {
        let mut s = self.cfg.spots.clone();
        if t > 0.0 {
            self.step(&mut s, t, rng);
        }
        s
    }

    /// Simulates the spots at each of `dates` (all after `t`, increasing)
    /// starting from `x` at `t`.
    pub(crate) fn simulate_path<R: Real>(&self, x: &[R], t: f64, dates: &[f64], rng: &mut PathRng) -> EquityPath<R> {
        let mut spots = x.to_vec();
        let mut prev = t;
        let mut out = Vec::with_capacity(dates.len());
        let mut discount = Vec::with_capacity(dates.len());
        for &d in dates {
            debug_assert!(d > prev);
            self.step(&mut spots, d - prev, rng);
            out.push(spots.clone());
            discount.push((-self.cfg.rate * (d - t)).exp());
            prev = d;
        }
        EquityPath {
            exposure: t,
            dates: dates.to_vec(),
            spots: out,
            discount,
            initial_spots: self.cfg.spots.clone(),
            rate: self.cfg.rate,
        }
    }

    /// Standard deviation of `w . S(t)` seen from today, treating spots as
    /// Gaussian with absolute volatility `vol * spot`.
    pub(crate) fn linear_sd(&self, weights: &[f64], t: f64) -> f64 {
        let n = self.cfg.n_assets;
        let a: Vec<f64> = (0..n)
            .map(|i| weights.get(i).copied().unwrap_or(0.0) * self.cfg.vols[i] * self.cfg.spots[i])
            .collect();
        let mut var = 0.0;
        for i in 0..n {
            for j in 0..n {
                var += a[i] * a[j] * self.cfg.correlation[i][j];
            }
        }
        (var.max(0.0) * t.max(0.0)).sqrt()
    }
}
