//! Training datasets `(X, Y, Z)` and the nested Monte-Carlo oracle
//! `(X, V, Delta)`.
//!
//! Row `i` of a dataset draws its exposure state from stream
//! `(seed, i, SUB_STATE)` and its post-exposure path from
//! `(seed, i, SUB_PAYOFF)`. Inner path `j` of the oracle at outer row `i`
//! uses `(seed, i, 1 + j)`.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Real, Tape};
use crate::error::{Error, Result};
use crate::instruments::Instrument;
use crate::lsm::ExercisePolicy;
use crate::models::Model;
use crate::rng::{PathRng, SUB_PAYOFF, SUB_STATE};

/// Default cap on `m_outer * m_inner` for nested simulations.
pub const DEFAULT_NESTED_BUDGET: u64 = 1 << 28;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub model_hash: String,
    pub instrument_hash: String,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub exposure: f64,
    /// Smoothing width used for payoff kinks.
    pub smoothing: f64,
    pub labels: Vec<String>,
}

/// `m` examples of state `x`, payoff `y` and pathwise differential `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub z: DMatrix<f64>,
    pub meta: DatasetMeta,
}

/// Nested Monte-Carlo prices and risk reports at outer states.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskReportSet {
    pub x: DMatrix<f64>,
    pub v: Vec<f64>,
    pub delta: DMatrix<f64>,
    pub m_inner: usize,
    pub stderr_v: Vec<f64>,
    pub stderr_delta: DMatrix<f64>,
}

/// Hex SHA-256 of a value's JSON serialization.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_string(value)?;
    Ok(Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

impl Dataset {
    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn exposure(&self) -> f64 {
        self.meta.exposure
    }
}

/// One pathwise payoff and its differential at state `x`.
pub fn payoff_and_differential(
    model: &Model,
    instrument: &Instrument,
    t: f64,
    x: &[f64],
    policy: Option<&ExercisePolicy>,
    rng: &mut PathRng,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let vars = tape.inputs(x);
    let y = model.simulate_payoff(&vars, t, instrument, policy, rng)?;
    let z = tape.gradient(y)?;
    Ok((y.value(), z))
}

fn check_exposure(model: &Model, instrument: &Instrument, t: f64) -> Result<usize> {
    instrument.validate(model)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("exposure", format!("must be finite and >= 0, got {t}")));
    }
    model.state_dim(t)
}

fn check_policy(instrument: &Instrument, policy: Option<&ExercisePolicy>) -> Result<()> {
    if instrument.is_callable() && policy.is_none() {
        return Err(Error::MissingPolicy);
    }
    Ok(())
}

/// Simulates `m` independent examples at exposure `t`.
pub fn generate(model: &Model, instrument: &Instrument, t: f64, m: usize, seed: u64) -> Result<Dataset> {
    generate_with_policy(model, instrument, t, m, seed, None)
}

/// [`generate`] for callable instruments, exercising by `policy` after `t`.
pub fn generate_with_policy(
    model: &Model,
    instrument: &Instrument,
    t: f64,
    m: usize,
    seed: u64,
    policy: Option<&ExercisePolicy>,
) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    let n = check_exposure(model, instrument, t)?;
    check_policy(instrument, policy)?;
    let rows: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let row = i as u64;
            let example = || -> Result<_> {
                let x = model.simulate_to_exposure(t, &mut PathRng::new(seed, row, SUB_STATE))?;
                let mut rng = PathRng::new(seed, row, SUB_PAYOFF);
                let (y, z) = payoff_and_differential(model, instrument, t, &x, policy, &mut rng)?;
                Ok((x, y, z))
            };
            example().map_err(|e| e.at_row(i))
        })
        .collect::<Result<_>>()?;
    let x = DMatrix::from_fn(m, n, |i, j| rows[i].0[j]);
    let z = DMatrix::from_fn(m, n, |i, j| rows[i].2[j]);
    let y = rows.iter().map(|r| r.1).collect();
    Ok(Dataset {
        x,
        y,
        z,
        meta: DatasetMeta {
            format_version: FORMAT_VERSION,
            model_hash: config_hash(&model.config())?,
            instrument_hash: config_hash(instrument)?,
            seed,
            m,
            n,
            exposure: t,
            smoothing: instrument.smoothing_width(model, t)?,
            labels: model.state_labels(t)?,
        },
    })
}

/// Settings for the nested oracle.
#[derive(Clone, Copy, Debug)]
pub struct NestedOptions<'a> {
    pub m_inner: usize,
    pub seed: u64,
    /// Maximum number of inner paths in total.
    pub budget: u64,
    pub policy: Option<&'a ExercisePolicy>,
    /// Also estimate risk reports; values only when false.
    pub deltas: bool,
}

impl<'a> NestedOptions<'a> {
    pub fn new(m_inner: usize, seed: u64) -> Self {
        Self {
            m_inner,
            seed,
            budget: DEFAULT_NESTED_BUDGET,
            policy: None,
            deltas: true,
        }
    }

    pub fn budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn policy(mut self, policy: Option<&'a ExercisePolicy>) -> Self {
        self.policy = policy;
        self
    }

    pub fn deltas(mut self, deltas: bool) -> Self {
        self.deltas = deltas;
        self
    }
}

/// Draws `m_outer` states at `t` and computes nested prices and risk reports
/// with `m_inner` inner paths each.
pub fn nested_risk_reports(
    model: &Model,
    instrument: &Instrument,
    t: f64,
    m_outer: usize,
    m_inner: usize,
    seed: u64,
) -> Result<RiskReportSet> {
    nested_risk_reports_with(model, instrument, t, m_outer, NestedOptions::new(m_inner, seed))
}

pub fn nested_risk_reports_with(
    model: &Model,
    instrument: &Instrument,
    t: f64,
    m_outer: usize,
    options: NestedOptions<'_>,
) -> Result<RiskReportSet> {
    check_budget(m_outer, options)?;
    let n = check_exposure(model, instrument, t)?;
    let states: Vec<Vec<f64>> = (0..m_outer)
        .into_par_iter()
        .map(|i| model.simulate_to_exposure(t, &mut PathRng::new(options.seed, i as u64, SUB_STATE)))
        .collect::<Result<_>>()?;
    let x = DMatrix::from_fn(m_outer, n, |i, j| states[i][j]);
    risk_reports_at(model, instrument, t, &x, options)
}

fn check_budget(m_outer: usize, options: NestedOptions<'_>) -> Result<()> {
    if m_outer == 0 || options.m_inner == 0 {
        return Err(Error::param("m", "outer and inner path counts must be at least 1"));
    }
    let required = (m_outer as u64).saturating_mul(options.m_inner as u64);
    if required > options.budget {
        return Err(Error::BudgetExceeded {
            required,
            budget: options.budget,
        });
    }
    Ok(())
}

/// Nested prices and risk reports at given states (rows of `x`).
pub fn risk_reports_at(
    model: &Model,
    instrument: &Instrument,
    t: f64,
    x: &DMatrix<f64>,
    options: NestedOptions<'_>,
) -> Result<RiskReportSet> {
    check_budget(x.nrows(), options)?;
    let n = check_exposure(model, instrument, t)?;
    check_policy(instrument, options.policy)?;
    if x.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "oracle states",
            expected: n,
            actual: x.ncols(),
        });
    }
    let m_inner = options.m_inner;
    let rows: Vec<(f64, f64, Vec<f64>, Vec<f64>)> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let state: Vec<f64> = x.row(i).iter().copied().collect();
            let mut sum_y = 0.0;
            let mut sum_y2 = 0.0;
            let mut sum_z = vec![0.0; n];
            let mut sum_z2 = vec![0.0; n];
            for j in 0..m_inner {
                let mut rng = PathRng::new(options.seed, i as u64, 1 + j as u64);
                let (y, z) = if options.deltas {
                    payoff_and_differential(model, instrument, t, &state, options.policy, &mut rng)
                } else {
                    model
                        .simulate_payoff::<f64>(&state, t, instrument, options.policy, &mut rng)
                        .map(|y| (y, vec![0.0; n]))
                }
                .map_err(|e| e.at_row(i))?;
                sum_y += y;
                sum_y2 += y * y;
                for k in 0..n {
                    sum_z[k] += z[k];
                    sum_z2[k] += z[k] * z[k];
                }
            }
            let mi = m_inner as f64;
            let stderr = |s: f64, s2: f64| {
                if m_inner < 2 {
                    return 0.0;
                }
                let mean = s / mi;
                ((s2 / mi - mean * mean).max(0.0) * mi / (mi - 1.0) / mi).sqrt()
            };
            let v = sum_y / mi;
            let se_v = stderr(sum_y, sum_y2);
            let delta: Vec<f64> = sum_z.iter().map(|s| s / mi).collect();
            let se_d: Vec<f64> = sum_z.iter().zip(&sum_z2).map(|(s, s2)| stderr(*s, *s2)).collect();
            Ok((v, se_v, delta, se_d))
        })
        .collect::<Result<_>>()?;
    let m = x.nrows();
    Ok(RiskReportSet {
        x: x.clone(),
        v: rows.iter().map(|r| r.0).collect(),
        stderr_v: rows.iter().map(|r| r.1).collect(),
        delta: DMatrix::from_fn(m, n, |i, j| rows[i].2[j]),
        stderr_delta: DMatrix::from_fn(m, n, |i, j| rows[i].3[j]),
        m_inner,
    })
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |j| format!("{prefix}_{j}"))
}

impl Dataset {
    /// Writes `x_0..,y,z_0..` rows to `path` and the metadata to
    /// `<path stem>.meta.json`. Values are written in shortest round-trip
    /// form so reading back is exact.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.n();
        let mut head: Vec<String> = header("x", n).collect();
        head.push("y".into());
        head.extend(header("z", n));
        w.write_record(&head)?;
        for i in 0..self.m() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v}")).collect();
            rec.push(format!("{}", self.y[i]));
            rec.extend(self.z.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let n = meta.n;
        let mut r = csv::Reader::from_path(path)?;
        let expected: Vec<String> = header("x", n).chain(["y".to_string()]).chain(header("z", n)).collect();
        let got: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if got != expected {
            return Err(Error::config("csv header", format!("expected {}", expected.join(","))));
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut z = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::config(format!("row {i}"), e.to_string()))?;
            x.extend_from_slice(&vals[..n]);
            y.push(vals[n]);
            z.extend_from_slice(&vals[n + 1..]);
        }
        let m = y.len();
        if m != meta.m {
            return Err(Error::config("m", format!("metadata says {} rows, file has {m}", meta.m)));
        }
        Ok(Dataset {
            x: DMatrix::from_row_slice(m, n, &x),
            y,
            z: DMatrix::from_row_slice(m, n, &z),
            meta,
        })
    }
}

impl RiskReportSet {
    pub fn m_outer(&self) -> usize {
        self.x.nrows()
    }

    /// Writes `x_0..,v,delta_0..,stderr_v` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.x.ncols();
        let mut head: Vec<String> = header("x", n).collect();
        head.push("v".into());
        head.extend(header("delta", n));
        head.push("stderr_v".into());
        w.write_record(&head)?;
        for i in 0..self.m_outer() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v}")).collect();
            rec.push(format!("{}", self.v[i]));
            rec.extend(self.delta.row(i).iter().map(|v| format!("{v}")));
            rec.push(format!("{}", self.stderr_v[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
