//! Linear dimension reduction: classic PCA on states, risk PCA on risk
//! reports and differential PCA on pathwise differentials.
//!
//! All three share the same mechanics. A second-moment matrix `C` (central
//! or not) is decomposed as `C = P D P^T`, the leading `p` eigenvectors `P~`
//! are kept, and states are encoded as `L = G x` and decoded as `x~ = H L`.
//! For risk and differential PCA `G = P~^T` and `H = P~`; classic PCA may
//! normalize the features to unit variance with `G = D~^(-1/2) P~^T` and
//! `H = P~ D~^(1/2)`. `Pi = H G` projects onto the kept axes and
//! `Sigma = I - Pi` maps onto the truncated ones.

mod covariance;
mod eigen;
mod report;

pub use covariance::{column_means, covariance};
pub use eigen::{eigen_sym, EigenDecomposition, Source};
pub use report::{eigen_report_csv, write_eigen_report};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, RiskReportSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Classic,
    Risk,
    Differential,
}

impl Mode {
    fn source(self) -> Source {
        match self {
            Mode::Classic => Source::State,
            Mode::Risk => Source::Risk,
            Mode::Differential => Source::Differential,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(Mode::Classic),
            "risk" => Ok(Mode::Risk),
            "differential" => Ok(Mode::Differential),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// How many eigenvectors to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Keep exactly `p` axes.
    Dim(usize),
    /// Keep the fewest axes whose truncated eigenvalues sum to at most `eps`.
    Tolerance(f64),
    /// Tolerance expressed as a fraction of the total eigenvalue mass.
    Relative(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub truncation: Truncation,
    pub central: bool,
    /// Unit-variance features (classic mode only).
    pub normalize: bool,
    /// Standardize each state coordinate by its sample mean and standard
    /// deviation before fitting; differentials are scaled accordingly.
    pub standardize: bool,
}

impl FitOptions {
    pub fn new(truncation: Truncation) -> Self {
        Self {
            truncation,
            central: false,
            normalize: false,
            standardize: false,
        }
    }

    pub fn central(mut self, central: bool) -> Self {
        self.central = central;
        self
    }

    pub fn normalize(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    /// The tolerance exceeds the total eigenvalue mass: every axis was
    /// truncated.
    AllTruncated { total_mass: f64, tolerance: f64 },
}

/// Per-coordinate affine transform `x~ = (x - mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    fn from_states(x: &DMatrix<f64>) -> Self {
        let mean = column_means(x);
        let m = x.nrows() as f64;
        let scale = x
            .column_iter()
            .zip(mean.iter())
            .map(|(c, mu)| {
                let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            mean: mean.iter().copied().collect(),
            scale,
        }
    }
}

/// A fitted linear encoder/decoder pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "EncoderFile", try_from = "EncoderFile")]
pub struct Encoder {
    /// `p x n` encoder.
    pub g: DMatrix<f64>,
    /// `n x p` decoder.
    pub h: DMatrix<f64>,
    /// Kept eigenvalues, decreasing.
    pub eigenvalues: Vec<f64>,
    /// Full spectrum of the fitted covariance.
    pub spectrum: Vec<f64>,
    /// Sum of the truncated eigenvalues.
    pub truncated_mass: f64,
    pub mode: Mode,
    pub central: bool,
    pub normalized: bool,
    pub standardization: Option<Standardization>,
    pub warning: Option<FitWarning>,
}

/// Encoder data to fit on, matched against the mode.
#[derive(Clone, Copy, Debug)]
pub enum FitData<'a> {
    States(&'a DMatrix<f64>),
    Dataset(&'a Dataset),
    RiskReports(&'a RiskReportSet),
}

/// Number of kept axes for a decreasing spectrum.
/// Normalized encoders scale by `1/sqrt(eigenvalue)`, which amplifies
/// roundoff in the eigenvectors by `sqrt(largest/eigenvalue)`. Kept
/// eigenvalues below this fraction of the largest are refused.
pub const NORMALIZE_MIN_RATIO: f64 = 1e-8;

fn kept_dim(values: &[f64], truncation: Truncation) -> Result<(usize, Option<FitWarning>)> {
    let n = values.len();
    let mass: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = mass.iter().sum();
    let eps = match truncation {
        Truncation::Dim(p) => {
            if p > n {
                return Err(Error::param("dim", format!("{p} exceeds state dimension {n}")));
            }
            return Ok((p, None));
        }
        Truncation::Tolerance(eps) => eps,
        Truncation::Relative(frac) => frac * total,
    };
    if !(eps >= 0.0) {
        return Err(Error::param("tolerance", format!("must be non-negative, got {eps}")));
    }
    if eps >= total {
        return Ok((
            0,
            Some(FitWarning::AllTruncated {
                total_mass: total,
                tolerance: eps,
            }),
        ));
    }
    // smallest p with tail sum <= eps
    let mut tail = 0.0;
    let mut p = n;
    while p > 0 && tail + mass[p - 1] <= eps {
        tail += mass[p - 1];
        p -= 1;
    }
    Ok((p, None))
}

/// Fits an encoder directly on an `m x n` matrix of rows (states for
/// classic mode, risk reports or differentials otherwise).
pub fn fit_rows(mode: Mode, rows: &DMatrix<f64>, options: FitOptions) -> Result<Encoder> {
    let states = (mode == Mode::Classic).then_some(rows);
    fit_impl(mode, rows, states, options)
}

/// Fits an encoder on a dataset, selecting states (classic), risk reports
/// (risk) or pathwise differentials (differential) according to `mode`.
pub fn fit(mode: Mode, data: FitData<'_>, options: FitOptions) -> Result<Encoder> {
    let (rows, states) = match (mode, data) {
        (Mode::Classic, FitData::States(x)) => (x, x),
        (Mode::Classic, FitData::Dataset(d)) => (&d.x, &d.x),
        (Mode::Classic, FitData::RiskReports(r)) => (&r.x, &r.x),
        (Mode::Risk, FitData::RiskReports(r)) => (&r.delta, &r.x),
        (Mode::Differential, FitData::Dataset(d)) => (&d.z, &d.x),
        (mode, _) => {
            return Err(Error::param(
                "data",
                format!("{mode:?} PCA needs {}", match mode {
                    Mode::Risk => "risk reports",
                    _ => "a dataset with pathwise differentials",
                }),
            ))
        }
    };
    fit_impl(mode, rows, Some(states), options)
}

fn fit_impl(mode: Mode, rows: &DMatrix<f64>, states: Option<&DMatrix<f64>>, options: FitOptions) -> Result<Encoder> {
    let n = rows.ncols();
    let standardization = match (options.standardize, states) {
        (true, Some(x)) => Some(Standardization::from_states(x)),
        (true, None) => return Err(Error::param("standardize", "requires the state matrix")),
        (false, _) => None,
    };
    let transformed;
    let rows = match &standardization {
        Some(s) => {
            transformed = transform_rows(mode, s, rows);
            &transformed
        }
        None => rows,
    };
    let cov = covariance(rows, options.central)?;
    let mut eig = eigen_sym(&cov)?;
    eig.source = mode.source();
    eig.central = options.central;
    let spectrum: Vec<f64> = eig.values.iter().copied().collect();
    let (p, warning) = kept_dim(&spectrum, options.truncation)?;
    if let Some(w) = &warning {
        log::warn!("{mode:?} PCA truncated every axis: {w:?}");
    }
    let kept = eig.vectors.columns(0, p).into_owned();
    let kept_values = spectrum[..p].to_vec();
    let truncated_mass = spectrum[p..].iter().fold(0.0, |acc, v| acc + v.max(0.0));
    let normalized = options.normalize && mode == Mode::Classic;
    let (g, h) = if normalized {
        let floor = NORMALIZE_MIN_RATIO * spectrum.first().copied().unwrap_or(0.0);
        if let Some(bad) = kept_values.iter().find(|v| !(**v > floor)) {
            return Err(Error::Numerical(format!(
                "cannot normalize by eigenvalue {bad} (numerically zero next to {:e}); keep fewer axes",
                spectrum[0]
            )));
        }
        let mut g = kept.transpose();
        let mut h = kept;
        for (k, d) in kept_values.iter().enumerate() {
            g.row_mut(k).scale_mut(1.0 / d.sqrt());
            h.column_mut(k).scale_mut(d.sqrt());
        }
        (g, h)
    } else {
        (kept.transpose(), kept)
    };
    debug_assert_eq!(h.nrows(), n);
    Ok(Encoder {
        g,
        h,
        eigenvalues: kept_values,
        spectrum,
        truncated_mass,
        mode,
        central: options.central,
        normalized,
        standardization,
        warning,
    })
}

fn transform_rows(mode: Mode, s: &Standardization, rows: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = rows.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        match mode {
            Mode::Classic => col.iter_mut().for_each(|v| *v = (*v - s.mean[j]) / s.scale[j]),
            _ => col.scale_mut(s.scale[j]),
        }
    }
    out
}

fn check_width(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

impl Encoder {
    /// State dimension `n`.
    pub fn input_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Feature dimension `p`.
    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn total_mass(&self) -> f64 {
        self.spectrum.iter().map(|v| v.max(0.0)).sum()
    }

    /// Projection `Pi = H G`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.h * &self.g
    }

    /// Error operator `Sigma = I - Pi`.
    pub fn error_operator(&self) -> DMatrix<f64> {
        DMatrix::identity(self.input_dim(), self.input_dim()) - self.projection()
    }

    fn standardize_state(&self, x: &[f64]) -> DVector<f64> {
        match &self.standardization {
            Some(s) => DVector::from_iterator(x.len(), x.iter().enumerate().map(|(j, v)| (v - s.mean[j]) / s.scale[j])),
            None => DVector::from_column_slice(x),
        }
    }

    /// `L = G x`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_width("encode", self.input_dim(), x.len())?;
        let l = &self.g * self.standardize_state(x);
        Ok(l.iter().copied().collect())
    }

    /// `x~ = H L`.
    pub fn decode(&self, l: &[f64]) -> Result<Vec<f64>> {
        check_width("decode", self.dim(), l.len())?;
        let x = &self.h * DVector::from_column_slice(l);
        Ok(match &self.standardization {
            Some(s) => x.iter().enumerate().map(|(j, v)| s.mean[j] + s.scale[j] * v).collect(),
            None => x.iter().copied().collect(),
        })
    }

    /// Encodes every row of an `m x n` state matrix.
    pub fn encode_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_width("encode_rows", self.input_dim(), x.ncols())?;
        let xs = match &self.standardization {
            Some(s) => transform_rows(Mode::Classic, s, x),
            None => x.clone(),
        };
        Ok(xs * self.g.transpose())
    }

    /// Rows in the fitted coordinates: standardized states for classic mode,
    /// scaled differentials otherwise.
    fn fitted_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.standardization {
            Some(s) => transform_rows(self.mode, s, rows),
            None => rows.clone(),
        }
    }

    fn differential_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.standardization {
            Some(s) => transform_rows(Mode::Differential, s, rows),
            None => rows.clone(),
        }
    }

    /// Sensitivities to the features, `S = H^T delta` for every row.
    pub fn feature_sensitivities(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_width("feature_sensitivities", self.input_dim(), rows.ncols())?;
        Ok(self.differential_rows(rows) * &self.h)
    }

    /// Mean squared norm of `Sigma r` over the rows.
    pub fn truncation_error(&self, rows: &DMatrix<f64>) -> Result<f64> {
        Ok(self.truncation_error_stats(rows)?.0)
    }

    /// Mean of `|Sigma r|^2` over the rows and the standard error of that
    /// mean.
    pub fn truncation_error_stats(&self, rows: &DMatrix<f64>) -> Result<(f64, f64)> {
        check_width("truncation_error", self.input_dim(), rows.ncols())?;
        let m = rows.nrows();
        if m == 0 {
            return Err(Error::param("rows", "empty"));
        }
        let r = self.fitted_rows(rows);
        let residual = &r - (&r * self.g.transpose()) * self.h.transpose();
        let sq: Vec<f64> = residual.row_iter().map(|row| row.norm_squared()).collect();
        let mean = sq.iter().sum::<f64>() / m as f64;
        let var = if m > 1 {
            sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        Ok((mean, (var / m as f64).sqrt()))
    }
}

/// Principal angles (radians, increasing) between the column spans of `a`
/// and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_width("principal_angles", a.nrows(), b.nrows())?;
    if a.ncols() == 0 || b.ncols() == 0 {
        return Ok(Vec::new());
    }
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let m = qa.transpose() * qb;
    let sv = m.svd(false, false).singular_values;
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Serialized form of an [`Encoder`], matrices as nested row arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncoderFile {
    format_version: u32,
    mode: Mode,
    central: bool,
    normalized: bool,
    g: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    spectrum: Vec<f64>,
    truncated_mass: f64,
    #[serde(default)]
    standardization: Option<Standardization>,
    #[serde(default)]
    warning: Option<FitWarning>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize, field: &str) -> Result<DMatrix<f64>, String> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("`{field}` rows must have {ncols} entries"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<Encoder> for EncoderFile {
    fn from(e: Encoder) -> Self {
        EncoderFile {
            format_version: 1,
            mode: e.mode,
            central: e.central,
            normalized: e.normalized,
            g: to_rows(&e.g),
            h: to_rows(&e.h),
            eigenvalues: e.eigenvalues,
            spectrum: e.spectrum,
            truncated_mass: e.truncated_mass,
            standardization: e.standardization,
            warning: e.warning,
        }
    }
}

impl TryFrom<EncoderFile> for Encoder {
    type Error = String;
    fn try_from(f: EncoderFile) -> Result<Self, String> {
        let p = f.eigenvalues.len();
        let n = f.h.len();
        let g = from_rows(&f.g, n, "g")?;
        let h = from_rows(&f.h, p, "h")?;
        if g.nrows() != p {
            return Err(format!("`g` must have {p} rows"));
        }
        Ok(Encoder {
            g,
            h,
            eigenvalues: f.eigenvalues,
            spectrum: f.spectrum,
            truncated_mass: f.truncated_mass,
            mode: f.mode,
            central: f.central,
            normalized: f.normalized,
            standardization: f.standardization,
            warning: f.warning,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PathRng;

    fn random_rows(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = PathRng::new(seed, 0, 0);
        let scales: Vec<f64> = (0..n).map(|j| 2.0f64.powi(-(j as i32))).collect();
        DMatrix::from_fn(m, n, |_, j| rng.normal() * scales[j] + 0.1)
    }

    #[test]
    fn truncation_by_tolerance() {
        let spectrum = [4.0, 2.0, 1.0, 0.5, 0.25];
        assert_eq!(kept_dim(&spectrum, Truncation::Tolerance(0.8)).unwrap().0, 3);
        assert_eq!(kept_dim(&spectrum, Truncation::Tolerance(0.75)).unwrap().0, 3);
        assert_eq!(kept_dim(&spectrum, Truncation::Tolerance(0.74)).unwrap().0, 4);
        assert_eq!(kept_dim(&spectrum, Truncation::Tolerance(0.0)).unwrap().0, 5);
        let (p, w) = kept_dim(&spectrum, Truncation::Tolerance(100.0)).unwrap();
        assert_eq!(p, 0);
        assert!(matches!(w, Some(FitWarning::AllTruncated { .. })));
        assert!(kept_dim(&spectrum, Truncation::Dim(6)).is_err());
        assert_eq!(kept_dim(&spectrum, Truncation::Relative(0.1)).unwrap().0, 3);
    }

    #[test]
    fn full_basis_reconstructs() {
        let rows = random_rows(200, 5, 1);
        for mode in [Mode::Risk, Mode::Differential] {
            let enc = fit_rows(mode, &rows, FitOptions::new(Truncation::Dim(5))).unwrap();
            let x = [0.3, -1.0, 2.0, 0.0, 5.0];
            let back = enc.decode(&enc.encode(&x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!(enc.truncation_error(&rows).unwrap() < 1e-20);
        }
    }

    #[test]
    fn kept_subspace_is_fixed() {
        let rows = random_rows(300, 4, 2);
        let enc = fit_rows(Mode::Differential, &rows, FitOptions::new(Truncation::Dim(2))).unwrap();
        let x: Vec<f64> = (enc.h.column(0) * 1.5 - enc.h.column(1) * 0.25).iter().copied().collect();
        let back = enc.decode(&enc.encode(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_algebra() {
        let rows = random_rows(500, 6, 3);
        for (mode, normalize) in [(Mode::Classic, true), (Mode::Classic, false), (Mode::Differential, false)] {
            let enc = fit_rows(mode, &rows, FitOptions::new(Truncation::Dim(3)).normalize(normalize)).unwrap();
            let gh = &enc.g * &enc.h;
            assert!((gh - DMatrix::identity(3, 3)).abs().max() < 1e-10);
            let pi = enc.projection();
            assert!((&pi * &pi - &pi).abs().max() < 1e-10);
            assert!((&pi * enc.error_operator()).abs().max() < 1e-10);
        }
    }

    #[test]
    fn truncation_error_equals_truncated_mass() {
        let rows = random_rows(2000, 6, 4);
        for central in [false, true] {
            let enc = fit_rows(Mode::Differential, &rows, FitOptions::new(Truncation::Dim(2)).central(central)).unwrap();
            let err = enc.truncation_error(&rows).unwrap();
            if central {
                // central covariance: mass excludes the mean, error includes it
                assert!(err >= enc.truncated_mass * (1.0 - 1e-8));
            } else {
                assert!((err - enc.truncated_mass).abs() <= 1e-8 * enc.truncated_mass);
            }
        }
    }

    #[test]
    fn tolerance_contract() {
        let rows = random_rows(1000, 8, 6);
        for eps in [1e-4, 1e-3, 0.01, 0.1, 0.5] {
            let enc = fit_rows(Mode::Differential, &rows, FitOptions::new(Truncation::Tolerance(eps))).unwrap();
            assert!(enc.truncated_mass <= eps);
            if enc.dim() > 0 {
                // dropping one more axis would break the tolerance
                assert!(enc.truncated_mass + enc.eigenvalues[enc.dim() - 1] > eps);
            }
        }
    }

    #[test]
    fn sensitivities_are_orthogonal() {
        let rows = random_rows(1000, 5, 7);
        let enc = fit_rows(Mode::Differential, &rows, FitOptions::new(Truncation::Dim(3))).unwrap();
        let s = enc.feature_sensitivities(&rows).unwrap();
        let ess = s.tr_mul(&s) / rows.nrows() as f64;
        let trace = ess.trace();
        for i in 0..3 {
            assert!((ess[(i, i)] - enc.eigenvalues[i]).abs() < 1e-10 * trace);
            for j in 0..3 {
                if i != j {
                    assert!(ess[(i, j)].abs() <= 1e-6 * trace);
                }
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let rows = random_rows(50, 3, 8);
        let enc = fit_rows(Mode::Differential, &rows, FitOptions::new(Truncation::Dim(2))).unwrap();
        assert!(enc.encode(&[1.0, 2.0]).is_err());
        assert!(enc.decode(&[1.0]).is_err());
        assert!(enc.feature_sensitivities(&DMatrix::zeros(3, 4)).is_err());
        assert!(fit_rows(Mode::Differential, &rows, FitOptions::new(Truncation::Dim(4))).is_err());
    }

    #[test]
    fn standardized_round_trip() {
        let rows = random_rows(400, 4, 9);
        let enc = fit_rows(Mode::Classic, &rows, FitOptions::new(Truncation::Dim(4)));
        assert!(enc.is_ok());
        let enc = fit(Mode::Classic, FitData::States(&rows), FitOptions::new(Truncation::Dim(4)).standardize(true)).unwrap();
        let x = [0.5, 0.1, -0.2, 0.3];
        let back = enc.decode(&enc.encode(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn json_round_trip() {
        let rows = random_rows(100, 4, 10);
        let enc = fit_rows(Mode::Differential, &rows, FitOptions::new(Truncation::Relative(0.05)).central(true)).unwrap();
        let s = serde_json::to_string(&enc).unwrap();
        let back: Encoder = serde_json::from_str(&s).unwrap();
        assert_eq!(back, enc);
    }

    #[test]
    fn principal_angles_basic() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        let ang = principal_angles(&a, &b).unwrap();
        assert!((ang[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let plane = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let ang = principal_angles(&plane, &b).unwrap();
        assert!(ang[0].abs() < 1e-7);
    }
}
