//! Least-squares Monte-Carlo for Bermudan options.
//!
//! [`fit_policy`] walks the call dates backward. At each date it simulates
//! fresh `(X, Y, Z)` with `Y` the discounted cash-flows under the rules
//! already fitted for later dates, reduces the state with differential PCA
//! and regresses the continuation value on the features. The last call date
//! needs no regression: its continuation value is zero.
//!
//! [`price_lower_bound`] applies the frozen policy to an independent path
//! set.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, NestedOptions};
use crate::dimred::{self, Encoder, FitOptions, Mode, Truncation};
use crate::error::{Error, Result};
use crate::instruments::Instrument;
use crate::models::Model;
use crate::regression::{self, BasisSpec, Lambdas, RegressionModel, RegressionOptions};
use crate::rng::{derive_seed, PathRng, SUB_PAYOFF, SUB_STATE};

const DATE_TOL: f64 = 1e-9;

/// Fraction of in-the-money paths below which a date regresses on all paths.
pub const MIN_ITM_FRACTION: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Continuation {
    /// No later cash-flows.
    Zero,
    /// Regression on encoded states.
    Fitted {
        encoder: Encoder,
        model: RegressionModel,
        /// Too few in-the-money paths: regressed on all paths.
        fallback_all_paths: bool,
        itm_fraction: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DateRule {
    pub date: f64,
    pub continuation: Continuation,
}

/// Exercise rule per call date: exercise when the intrinsic value is
/// positive and at least the predicted continuation value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExercisePolicy {
    /// Rules by increasing date.
    pub rules: Vec<DateRule>,
    /// Never exercise, regardless of rules.
    #[serde(default)]
    pub never: bool,
}

impl ExercisePolicy {
    pub fn never() -> Self {
        Self {
            rules: Vec::new(),
            never: true,
        }
    }

    /// Exercise whenever in the money, as at the last call date.
    pub fn immediate(dates: &[f64]) -> Self {
        Self {
            rules: dates
                .iter()
                .map(|&date| DateRule {
                    date,
                    continuation: Continuation::Zero,
                })
                .collect(),
            never: false,
        }
    }

    pub fn rule(&self, date: f64) -> Option<&DateRule> {
        self.rules.iter().find(|r| (r.date - date).abs() < DATE_TOL)
    }

    fn insert(&mut self, rule: DateRule) {
        self.rules.retain(|r| (r.date - rule.date).abs() >= DATE_TOL);
        self.rules.push(rule);
        self.rules.sort_by(|a, b| a.date.total_cmp(&b.date));
    }

    /// Predicted continuation value at `date` in `state`.
    pub fn continuation(&self, date: f64, state: &[f64]) -> Result<f64> {
        let rule = self
            .rule(date)
            .ok_or_else(|| Error::param("date", format!("no exercise rule at {date}")))?;
        match &rule.continuation {
            Continuation::Zero => Ok(0.0),
            Continuation::Fitted { encoder, model, .. } => model.predict(&encoder.encode(state)?),
        }
    }

    pub fn exercise(&self, date: f64, state: &[f64], intrinsic: f64) -> Result<bool> {
        if self.never || !(intrinsic > 0.0) {
            return Ok(false);
        }
        Ok(intrinsic >= self.continuation(date, state)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsmOptions {
    pub m_train: usize,
    /// Total degree of the monomial basis on the features.
    pub degree: usize,
    pub truncation: Truncation,
    pub central: bool,
    /// Use derivative labels in the regressions.
    pub differential: bool,
    pub seed: u64,
}

impl Default for LsmOptions {
    fn default() -> Self {
        Self {
            m_train: 8192,
            degree: 3,
            truncation: Truncation::Relative(0.01),
            central: false,
            differential: true,
            seed: 1,
        }
    }
}

fn future_dates(bermudan: &Instrument) -> Result<Vec<f64>> {
    if !bermudan.is_callable() {
        return Err(Error::config("instrument", format!("`{}` is not callable", bermudan.name())));
    }
    let dates: Vec<f64> = bermudan.call_dates().to_vec();
    if dates.is_empty() || dates.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::config("call_dates", "need at least one call date, all after today"));
    }
    Ok(dates)
}

/// Fits a continuation model on `(x, y, z)` with differential PCA features.
fn fit_continuation(
    x: &DMatrix<f64>,
    y: &[f64],
    z: &DMatrix<f64>,
    options: &LsmOptions,
) -> Result<(Encoder, RegressionModel)> {
    let encoder = dimred::fit_rows(
        Mode::Differential,
        z,
        FitOptions::new(options.truncation).central(options.central),
    )?;
    let l = encoder.encode_rows(x)?;
    let basis = BasisSpec::monomials(encoder.dim(), options.degree);
    let reg = RegressionOptions { rescale: true };
    let model = if options.differential {
        let s = encoder.feature_sensitivities(z)?;
        regression::fit_differential(&l, y, &s, &basis, &Lambdas::Auto, reg)?
    } else {
        regression::fit_value(&l, y, &basis, 0.0, reg)?
    };
    Ok((encoder, model))
}

/// Backward induction over the call dates of `bermudan`.
pub fn fit_policy(model: &Model, bermudan: &Instrument, options: &LsmOptions) -> Result<ExercisePolicy> {
    bermudan.validate(model)?;
    let dates = future_dates(bermudan)?;
    if options.m_train == 0 {
        return Err(Error::param("m_train", "must be at least 1"));
    }
    let last = *dates.last().expect("non-empty");
    let mut policy = ExercisePolicy::immediate(&[last]);
    for (idx, &date) in dates.iter().enumerate().rev().skip(1) {
        let data = datagen::generate_with_policy(
            model,
            bermudan,
            date,
            options.m_train,
            derive_seed(options.seed, idx as u64),
            Some(&policy),
        )?;
        let m = data.m();
        let itm: Vec<usize> = (0..m)
            .filter(|&i| {
                let state: Vec<f64> = data.x.row(i).iter().copied().collect();
                bermudan.intrinsic(model, date, &state).map(|v| v > 0.0).unwrap_or(false)
            })
            .collect();
        let itm_fraction = itm.len() as f64 / m as f64;
        let fallback = itm_fraction < MIN_ITM_FRACTION;
        let rows: Vec<usize> = if fallback { (0..m).collect() } else { itm };
        if fallback {
            log::info!("call date {date}: {:.1}% in the money, regressing on all paths", 100.0 * itm_fraction);
        }
        let x = regression::select_rows(&data.x, &rows);
        let z = regression::select_rows(&data.z, &rows);
        let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
        let (encoder, reg) = fit_continuation(&x, &y, &z, options)?;
        log::debug!("call date {date}: {} features", encoder.dim());
        policy.insert(DateRule {
            date,
            continuation: Continuation::Fitted {
                encoder,
                model: reg,
                fallback_all_paths: fallback,
                itm_fraction,
            },
        });
    }
    Ok(policy)
}

/// Monte-Carlo price today of `bermudan` exercised by the frozen `policy`,
/// with its standard error.
pub fn price_lower_bound(
    model: &Model,
    bermudan: &Instrument,
    policy: &ExercisePolicy,
    m_price: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    bermudan.validate(model)?;
    if m_price == 0 {
        return Err(Error::param("m_price", "must be at least 1"));
    }
    let x0 = model.simulate_to_exposure(0.0, &mut PathRng::new(seed, 0, SUB_STATE))?;
    let values: Vec<f64> = (0..m_price)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathRng::new(seed, i as u64, SUB_PAYOFF);
            model
                .simulate_payoff::<f64>(&x0, 0.0, bermudan, Some(policy), &mut rng)
                .map_err(|e| e.at_row(i))
        })
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&values))
}

pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub m_train: usize,
    pub m_test: usize,
    /// Inner paths per test state for the reference values.
    pub m_inner: usize,
    /// Basis degree for regressions on the raw state.
    pub degree_raw: usize,
    /// Basis degree for regressions on differential-PCA features.
    pub degree_features: usize,
    pub truncation: Truncation,
    pub central: bool,
    /// Options for the policy on the call dates after the study date.
    pub policy: LsmOptions,
    pub seed: u64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            m_train: 8192,
            m_test: 128,
            m_inner: 4096,
            degree_raw: 2,
            degree_features: 3,
            truncation: Truncation::Relative(0.01),
            central: false,
            policy: LsmOptions::default(),
            seed: 7,
        }
    }
}

pub const STUDY_METHODS: [&str; 4] = ["value_raw", "value_pca", "differential_raw", "differential_pca"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub rmse: f64,
    pub n_features: usize,
    pub n_basis: usize,
    pub predictions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub date: f64,
    pub state_dim: usize,
    pub pca_dim: usize,
    pub eigenvalues: Vec<f64>,
    pub truncated_mass: f64,
    pub truth: Vec<f64>,
    /// Mean standard error of the reference values.
    pub truth_stderr: f64,
    pub methods: Vec<MethodResult>,
}

impl StudyReport {
    pub fn rmse(&self, method: &str) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method).map(|m| m.rmse)
    }

    /// Scatter table `truth,<method>..` for plotting.
    pub fn scatter_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["truth".to_string()];
        head.extend(self.methods.iter().map(|m| m.method.clone()));
        w.write_record(&head)?;
        for (i, t) in self.truth.iter().enumerate() {
            let mut rec = vec![format!("{t}")];
            rec.extend(self.methods.iter().map(|m| format!("{}", m.predictions[i])));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (s / truth.len() as f64).sqrt()
}

/// Fits the continuation value at `date` four ways (value-only or
/// differential regression, on raw states or differential-PCA features) and
/// scores each against nested Monte-Carlo values at out-of-sample states.
pub fn continuation_study(model: &Model, bermudan: &Instrument, date: f64, options: &StudyOptions) -> Result<StudyReport> {
    bermudan.validate(model)?;
    let later: Vec<f64> = future_dates(bermudan)?.into_iter().filter(|d| *d > date + DATE_TOL).collect();
    if later.is_empty() {
        return Err(Error::param("date", format!("no call date after {date}")));
    }
    let sub = bermudan.with_call_dates(later);
    let policy = if sub.call_dates().len() > 1 {
        let mut lsm = options.policy.clone();
        lsm.seed = derive_seed(options.seed, 1);
        fit_policy(model, &sub, &lsm)?
    } else {
        ExercisePolicy::immediate(sub.call_dates())
    };
    let train = datagen::generate_with_policy(model, &sub, date, options.m_train, derive_seed(options.seed, 2), Some(&policy))?;
    let test_seed = derive_seed(options.seed, 3);
    let n = train.n();
    let mut x_test = DMatrix::zeros(options.m_test, n);
    for i in 0..options.m_test {
        let s = model.simulate_to_exposure(date, &mut PathRng::new(test_seed, i as u64, SUB_STATE))?;
        x_test.row_mut(i).copy_from_slice(&s);
    }
    let oracle = datagen::risk_reports_at(
        model,
        &sub,
        date,
        &x_test,
        NestedOptions::new(options.m_inner, derive_seed(options.seed, 4))
            .policy(Some(&policy))
            .deltas(false),
    )?;
    let truth = oracle.v.clone();
    let truth_stderr = oracle.stderr_v.iter().sum::<f64>() / truth.len() as f64;

    let reg = RegressionOptions { rescale: true };
    let raw_basis = BasisSpec::monomials(n, options.degree_raw);
    let encoder = dimred::fit_rows(
        Mode::Differential,
        &train.z,
        FitOptions::new(options.truncation).central(options.central),
    )?;
    let p = encoder.dim();
    let feat_basis = BasisSpec::monomials(p, options.degree_features);
    let l_train = encoder.encode_rows(&train.x)?;
    let l_test = encoder.encode_rows(&x_test)?;
    let s_train = encoder.feature_sensitivities(&train.z)?;

    let fits: Vec<(&str, RegressionModel, bool)> = vec![
        ("value_raw", regression::fit_value(&train.x, &train.y, &raw_basis, 0.0, reg)?, false),
        ("value_pca", regression::fit_value(&l_train, &train.y, &feat_basis, 0.0, reg)?, true),
        (
            "differential_raw",
            regression::fit_differential(&train.x, &train.y, &train.z, &raw_basis, &Lambdas::Auto, reg)?,
            false,
        ),
        (
            "differential_pca",
            regression::fit_differential(&l_train, &train.y, &s_train, &feat_basis, &Lambdas::Auto, reg)?,
            true,
        ),
    ];
    let mut methods = Vec::new();
    for (name, fitted, on_features) in fits {
        let predictions = if on_features {
            fitted.predict_rows(&l_test)?
        } else {
            fitted.predict_rows(&x_test)?
        };
        methods.push(MethodResult {
            method: name.to_string(),
            rmse: rmse(&predictions, &truth),
            n_features: if on_features { p } else { n },
            n_basis: fitted.basis.len(),
            predictions,
        });
    }
    Ok(StudyReport {
        date,
        state_dim: n,
        pca_dim: p,
        eigenvalues: encoder.spectrum.clone(),
        truncated_mass: encoder.truncated_mass,
        truth,
        truth_stderr,
        methods,
    })
}

/// Bermudan put under Black-Scholes dynamics on a Cox-Ross-Rubinstein tree,
/// exercisable on `call_dates` only. Call dates are snapped to the nearest
/// tree step.
pub fn binomial_bermudan_put(spot: f64, strike: f64, rate: f64, vol: f64, call_dates: &[f64], steps: usize) -> Result<f64> {
    let Some(&maturity) = call_dates.last() else {
        return Err(Error::param("call_dates", "empty"));
    };
    if !(maturity > 0.0 && vol > 0.0 && spot > 0.0) || steps == 0 {
        return Err(Error::param("lattice", "needs positive spot, vol, maturity and steps"));
    }
    let dt = maturity / steps as f64;
    let u = (vol * dt.sqrt()).exp();
    let d = 1.0 / u;
    let growth = (rate * dt).exp();
    let q = (growth - d) / (u - d);
    let disc = 1.0 / growth;
    let exercise_steps: Vec<usize> = call_dates.iter().map(|t| (t / dt).round() as usize).collect();
    let node = |step: usize, k: usize| spot * u.powi(2 * k as i32 - step as i32);
    let mut values: Vec<f64> = (0..=steps).map(|k| (strike - node(steps, k)).max(0.0)).collect();
    for step in (0..steps).rev() {
        let exercisable = exercise_steps.contains(&step) && step > 0;
        for k in 0..=step {
            let cont = disc * (q * values[k + 1] + (1.0 - q) * values[k]);
            values[k] = if exercisable { cont.max(strike - node(step, k)) } else { cont };
        }
    }
    Ok(values[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_rules() {
        let p = ExercisePolicy::immediate(&[1.0]);
        assert!(p.exercise(1.0, &[90.0], 10.0).unwrap());
        assert!(!p.exercise(1.0, &[110.0], -10.0).unwrap());
        assert!(!p.exercise(1.0, &[100.0], 0.0).unwrap());
        assert!(p.exercise(0.5, &[90.0], 10.0).is_err());
        assert!(!ExercisePolicy::never().exercise(1.0, &[0.0], 100.0).unwrap());
    }

    #[test]
    fn binomial_european_limit() {
        // single exercise date: European put, compared with Black-Scholes
        let (s, k, r, v, t) = (100.0f64, 100.0, 0.03, 0.2, 1.0);
        let d1 = ((s / k).ln() + (r + 0.5 * v * v) * t) / (v * t.sqrt());
        let d2 = d1 - v * t.sqrt();
        let n = crate::autodiff::norm_cdf_f64;
        let bs = k * (-r * t).exp() * n(-d2) - s * n(-d1);
        let lattice = binomial_bermudan_put(s, k, r, v, &[1.0], 1000).unwrap();
        assert!((lattice - bs).abs() < 0.01, "{lattice} vs {bs}");
        let berm = binomial_bermudan_put(s, k, r, v, &[0.5, 1.0], 1000).unwrap();
        assert!(berm > lattice);
    }
}
