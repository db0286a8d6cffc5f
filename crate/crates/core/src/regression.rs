//! Linear regression on monomial bases, with Tikhonov regularization or
//! derivative (differential) labels.
//!
//! Both fits solve a `k x k` normal equation `A beta = b` through an SVD
//! pseudo-inverse: singular values below [`SVD_CUTOFF`] times the largest
//! are treated as zero, which yields the minimum-norm solution when the
//! system is rank deficient.
//!
//! With differential labels the objective is
//! `mean((phi beta - y)^2) + sum_i lambda_i mean((dphi_i beta - z_i)^2)`,
//! minimized by `A = C_phi + sum_i lambda_i C_dphi_i`,
//! `b = C_phi_y + sum_i lambda_i C_dphi_i_z_i`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value cutoff of the pseudo-inverse.
pub const SVD_CUTOFF: f64 = 1e-12;

const BLOCK_ROWS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Monomials,
}

/// All monomials in `dim` variables of total degree at most `degree`, in
/// graded order: the constant first, then degree one, and so on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "BasisFile", into = "BasisFile")]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub dim: usize,
    pub degree: usize,
    exponents: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisFile {
    kind: BasisKind,
    dim: usize,
    degree: usize,
}

impl From<BasisFile> for BasisSpec {
    fn from(f: BasisFile) -> Self {
        BasisSpec::monomials(f.dim, f.degree)
    }
}

impl From<BasisSpec> for BasisFile {
    fn from(b: BasisSpec) -> Self {
        BasisFile {
            kind: b.kind,
            dim: b.dim,
            degree: b.degree,
        }
    }
}

fn push_compositions(total: u32, dim: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == dim {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(total - first, dim, prefix, out);
        prefix.pop();
    }
}

impl BasisSpec {
    pub fn monomials(dim: usize, degree: usize) -> Self {
        let mut exponents = Vec::new();
        if dim == 0 {
            exponents.push(Vec::new());
        } else {
            for total in 0..=degree as u32 {
                push_compositions(total, dim, &mut Vec::with_capacity(dim), &mut exponents);
            }
        }
        Self {
            kind: BasisKind::Monomials,
            dim,
            degree,
            exponents,
        }
    }

    /// Number of basis functions, `C(dim + degree, degree)`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    fn powers(&self, x: &[f64]) -> Vec<f64> {
        // powers[i * (g + 1) + e] = x_i^e
        let g1 = self.degree + 1;
        let mut p = vec![1.0; self.dim * g1];
        for (i, xi) in x.iter().enumerate() {
            for e in 1..g1 {
                p[i * g1 + e] = p[i * g1 + e - 1] * xi;
            }
        }
        p
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "basis input",
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `phi(x)`.
    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = vec![0.0; self.len()];
        self.expand_into(x, &mut out);
        Ok(out)
    }

    fn expand_into(&self, x: &[f64], out: &mut [f64]) {
        let g1 = self.degree + 1;
        let p = self.powers(x);
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e.iter().enumerate().map(|(i, &ei)| p[i * g1 + ei as usize]).product();
        }
    }

    /// `k x d` matrix of `d phi_j / d x_i`.
    pub fn expand_derivs(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let mut out = DMatrix::zeros(self.len(), self.dim);
        let g1 = self.degree + 1;
        let p = self.powers(x);
        for (j, e) in self.exponents.iter().enumerate() {
            for i in 0..self.dim {
                if e[i] == 0 {
                    continue;
                }
                let mut v = e[i] as f64 * p[i * g1 + e[i] as usize - 1];
                for (l, &el) in e.iter().enumerate() {
                    if l != i {
                        v *= p[l * g1 + el as usize];
                    }
                }
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }
}

/// Affine map of each input coordinate onto `[-1, 1]`:
/// `u_i = (x_i - center_i) / half_range_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub center: Vec<f64>,
    pub half_range: Vec<f64>,
}

impl Scaling {
    fn from_inputs(x: &DMatrix<f64>) -> Self {
        let mut center = Vec::with_capacity(x.ncols());
        let mut half_range = Vec::with_capacity(x.ncols());
        for c in x.column_iter() {
            let lo = c.min();
            let hi = c.max();
            center.push(0.5 * (lo + hi));
            let h = 0.5 * (hi - lo);
            half_range.push(if h > 0.0 { h } else { 1.0 });
        }
        Self { center, half_range }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.center[i]) / self.half_range[i])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularization {
    None,
    Tikhonov { lambda: f64 },
    /// Derivative-error weights, in the units of the caller's inputs.
    Differential { lambdas: Vec<f64> },
}

/// Derivative weights for [`fit_differential`].
#[derive(Clone, Debug, PartialEq)]
pub enum Lambdas {
    /// `lambda_i = E[Y^2] / E[Z_i^2]`.
    Auto,
    Given(Vec<f64>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub train_mse: f64,
    /// Ratio of extreme singular values of the normal matrix.
    pub condition: f64,
    pub rank: usize,
    pub rank_deficient: bool,
    /// Coordinates with identically zero derivative labels, given no weight.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zero_weight_coords: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionOptions {
    /// Rescale inputs onto `[-1, 1]` before expanding the basis.
    pub rescale: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub basis: BasisSpec,
    /// Coefficients on the basis evaluated at the (possibly rescaled) inputs.
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Scaling>,
    pub regularization: Regularization,
    pub diagnostics: Diagnostics,
}

/// Training data for a fit, `x` is `m x d`.
struct Problem<'a> {
    basis: &'a BasisSpec,
    scaling: Option<&'a Scaling>,
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    /// Derivative labels with their weights in basis units.
    z: Option<(&'a DMatrix<f64>, Vec<f64>)>,
    tikhonov: f64,
}

impl Problem<'_> {
    fn inputs(&self, i: usize) -> Vec<f64> {
        let row: Vec<f64> = self.x.row(i).iter().copied().collect();
        match self.scaling {
            Some(s) => s.apply(&row),
            None => row,
        }
    }

    /// Derivative label in basis units.
    fn zlabel(&self, z: &DMatrix<f64>, i: usize, c: usize) -> f64 {
        match self.scaling {
            Some(s) => z[(i, c)] * s.half_range[c],
            None => z[(i, c)],
        }
    }

    /// Normal matrix and right-hand side, accumulated over row blocks in a
    /// fixed order.
    fn normal_equation(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.x.nrows();
        let k = self.basis.len();
        let d = self.basis.dim;
        let starts: Vec<usize> = (0..m).step_by(BLOCK_ROWS).collect();
        let partials: Vec<(DMatrix<f64>, DVector<f64>)> = starts
            .par_iter()
            .map(|&start| {
                let len = BLOCK_ROWS.min(m - start);
                let n_deriv = if self.z.is_some() { d } else { 0 };
                let mut design = DMatrix::zeros(len * (1 + n_deriv), k);
                let mut target = DVector::zeros(len * (1 + n_deriv));
                let mut phi = vec![0.0; k];
                for r in 0..len {
                    let i = start + r;
                    let u = self.inputs(i);
                    self.basis.expand_into(&u, &mut phi);
                    for j in 0..k {
                        design[(r, j)] = phi[j];
                    }
                    target[r] = self.y[i];
                    if let Some((z, weights)) = &self.z {
                        let dphi = self.basis.expand_derivs(&u).expect("dimension checked");
                        for c in 0..d {
                            let w = weights[c].sqrt();
                            let row = len + c * len + r;
                            for j in 0..k {
                                design[(row, j)] = w * dphi[(j, c)];
                            }
                            target[row] = w * self.zlabel(z, i, c);
                        }
                    }
                }
                (design.tr_mul(&design), design.tr_mul(&target))
            })
            .collect();
        let mut a = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        for (pa, pb) in partials {
            a += pa;
            b += pb;
        }
        a /= m as f64;
        b /= m as f64;
        for j in 0..k {
            a[(j, j)] += self.tikhonov;
        }
        (a, b)
    }

    /// Training objective at `beta` (basis units).
    fn objective(&self, beta: &[f64]) -> f64 {
        let m = self.x.nrows();
        let mut total = 0.0;
        for i in 0..m {
            let u = self.inputs(i);
            let phi = self.basis.expand(&u).expect("dimension checked");
            let r = dot(&phi, beta) - self.y[i];
            total += r * r;
            if let Some((z, weights)) = &self.z {
                let dphi = self.basis.expand_derivs(&u).expect("dimension checked");
                for (c, w) in weights.iter().enumerate() {
                    let pred: f64 = dphi.column(c).iter().zip(beta).map(|(a, b)| a * b).sum();
                    let e = pred - self.zlabel(z, i, c);
                    total += w * e * e;
                }
            }
        }
        total / m as f64 + self.tikhonov * beta.iter().map(|b| b * b).sum::<f64>()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Solution {
    beta: Vec<f64>,
    condition: f64,
    rank: usize,
}

fn solve_pinv(a: DMatrix<f64>, b: &DVector<f64>) -> Result<Solution> {
    let k = a.nrows();
    let svd = a.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("SVD did not produce singular vectors".into())),
    };
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    if !smax.is_finite() {
        return Err(Error::Numerical("non-finite normal matrix".into()));
    }
    let cut = SVD_CUTOFF * smax;
    let utb = u.tr_mul(b);
    let mut coef = DVector::zeros(k);
    let mut rank = 0;
    for i in 0..k {
        if s[i] > cut && s[i] > 0.0 {
            coef[i] = utb[i] / s[i];
            rank += 1;
        }
    }
    let beta = vt.tr_mul(&coef);
    Ok(Solution {
        beta: beta.iter().copied().collect(),
        condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        rank,
    })
}

fn check_data(basis: &BasisSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::param("m", "need at least one training row"));
    }
    if x.ncols() != basis.dim {
        return Err(Error::DimensionMismatch {
            context: "regression inputs",
            expected: basis.dim,
            actual: x.ncols(),
        });
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            context: "regression labels",
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    Ok(())
}

fn finish(
    problem: &Problem<'_>,
    basis: &BasisSpec,
    scaling: Option<Scaling>,
    regularization: Regularization,
    zero_weight_coords: Vec<usize>,
) -> Result<RegressionModel> {
    let (a, b) = problem.normal_equation();
    let sol = solve_pinv(a, &b)?;
    if sol.beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite regression coefficients".into()));
    }
    let k = basis.len();
    let mut model = RegressionModel {
        basis: basis.clone(),
        beta: sol.beta,
        scaling,
        regularization,
        diagnostics: Diagnostics {
            train_mse: 0.0,
            condition: sol.condition,
            rank: sol.rank,
            rank_deficient: sol.rank < k,
            zero_weight_coords,
        },
    };
    if model.diagnostics.rank_deficient {
        log::debug!("regression normal matrix has rank {} < {k}", sol.rank);
    }
    let m = problem.x.nrows();
    let mut sse = 0.0;
    for i in 0..m {
        let row: Vec<f64> = problem.x.row(i).iter().copied().collect();
        let e = model.predict(&row)? - problem.y[i];
        sse += e * e;
    }
    model.diagnostics.train_mse = sse / m as f64;
    Ok(model)
}

/// Value-only least squares with Tikhonov weight `lambda`:
/// `beta = (C_phi + lambda I)^+ C_phi_y`.
pub fn fit_value(
    x: &DMatrix<f64>,
    y: &[f64],
    basis: &BasisSpec,
    lambda: f64,
    options: RegressionOptions,
) -> Result<RegressionModel> {
    check_data(basis, x, y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be finite and >= 0, got {lambda}")));
    }
    let scaling = options.rescale.then(|| Scaling::from_inputs(x));
    let problem = Problem {
        basis,
        scaling: scaling.as_ref(),
        x,
        y,
        z: None,
        tikhonov: lambda,
    };
    let reg = if lambda > 0.0 {
        Regularization::Tikhonov { lambda }
    } else {
        Regularization::None
    };
    finish(&problem, basis, scaling.clone(), reg, Vec::new())
}

/// Automatic derivative weights `E[Y^2] / E[Z_i^2]`; coordinates with
/// `E[Z_i^2] = 0` get weight zero and are reported.
pub fn auto_lambdas(y: &[f64], z: &DMatrix<f64>) -> (Vec<f64>, Vec<usize>) {
    let m = y.len().max(1) as f64;
    let ey2 = y.iter().map(|v| v * v).sum::<f64>() / m;
    let mut zero = Vec::new();
    let lambdas = z
        .column_iter()
        .enumerate()
        .map(|(i, c)| {
            let ez2 = c.norm_squared() / m;
            if ez2 > 0.0 {
                ey2 / ez2
            } else {
                zero.push(i);
                0.0
            }
        })
        .collect();
    (lambdas, zero)
}

/// Differential regression on values `y` and derivative labels `z`
/// (`m x d`, derivatives with respect to the columns of `x`).
pub fn fit_differential(
    x: &DMatrix<f64>,
    y: &[f64],
    z: &DMatrix<f64>,
    basis: &BasisSpec,
    lambdas: &Lambdas,
    options: RegressionOptions,
) -> Result<RegressionModel> {
    check_data(basis, x, y)?;
    if z.shape() != x.shape() {
        return Err(Error::DimensionMismatch {
            context: "derivative labels",
            expected: x.ncols(),
            actual: z.ncols(),
        });
    }
    let (lambdas, zero) = match lambdas {
        Lambdas::Auto => auto_lambdas(y, z),
        Lambdas::Given(l) => {
            if l.len() != basis.dim {
                return Err(Error::DimensionMismatch {
                    context: "derivative weights",
                    expected: basis.dim,
                    actual: l.len(),
                });
            }
            if l.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::param("lambdas", "must be finite and >= 0"));
            }
            (l.clone(), Vec::new())
        }
    };
    let scaling = options.rescale.then(|| Scaling::from_inputs(x));
    let weights = basis_weights(&lambdas, scaling.as_ref());
    let problem = Problem {
        basis,
        scaling: scaling.as_ref(),
        x,
        y,
        z: Some((z, weights)),
        tikhonov: 0.0,
    };
    finish(
        &problem,
        basis,
        scaling.clone(),
        Regularization::Differential { lambdas },
        zero,
    )
}

/// Weights in basis units: a derivative in rescaled units is
/// `half_range` times the original one.
fn basis_weights(lambdas: &[f64], scaling: Option<&Scaling>) -> Vec<f64> {
    match scaling {
        Some(s) => lambdas
            .iter()
            .zip(&s.half_range)
            .map(|(l, h)| l / (h * h))
            .collect(),
        None => lambdas.to_vec(),
    }
}

impl RegressionModel {
    fn basis_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.basis.check(x)?;
        Ok(match &self.scaling {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        })
    }

    /// `beta . phi(x)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let u = self.basis_input(x)?;
        let mut phi = vec![0.0; self.basis.len()];
        self.basis.expand_into(&u, &mut phi);
        Ok(dot(&phi, &self.beta))
    }

    /// Analytic gradient of [`predict`](Self::predict) with respect to `x`.
    pub fn predict_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let u = self.basis_input(x)?;
        let dphi = self.basis.expand_derivs(&u)?;
        Ok((0..self.basis.dim)
            .map(|i| {
                let g: f64 = dphi.column(i).iter().zip(&self.beta).map(|(a, b)| a * b).sum();
                match &self.scaling {
                    Some(s) => g / s.half_range[i],
                    None => g,
                }
            })
            .collect())
    }

    /// Predictions for every row of `x`.
    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        (0..x.nrows())
            .map(|i| self.predict(&x.row(i).iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    /// The training objective this model minimizes, evaluated at
    /// coefficients `beta`: mean squared value error, plus the weighted
    /// derivative errors or the Tikhonov penalty.
    pub fn objective(&self, beta: &[f64], x: &DMatrix<f64>, y: &[f64], z: Option<&DMatrix<f64>>) -> Result<f64> {
        check_data(&self.basis, x, y)?;
        if beta.len() != self.basis.len() {
            return Err(Error::DimensionMismatch {
                context: "coefficients",
                expected: self.basis.len(),
                actual: beta.len(),
            });
        }
        let (tikhonov, zw) = match (&self.regularization, z) {
            (Regularization::None, _) => (0.0, None),
            (Regularization::Tikhonov { lambda }, _) => (*lambda, None),
            (Regularization::Differential { lambdas }, Some(z)) => {
                (0.0, Some((z, basis_weights(lambdas, self.scaling.as_ref()))))
            }
            (Regularization::Differential { .. }, None) => {
                return Err(Error::param("z", "differential objective needs derivative labels"))
            }
        };
        let problem = Problem {
            basis: &self.basis,
            scaling: self.scaling.as_ref(),
            x,
            y,
            z: zw,
            tikhonov,
        };
        Ok(problem.objective(beta))
    }

    /// Gradient of [`objective`](Self::objective) with respect to `beta`.
    pub fn objective_gradient(&self, beta: &[f64], x: &DMatrix<f64>, y: &[f64], z: Option<&DMatrix<f64>>) -> Result<Vec<f64>> {
        check_data(&self.basis, x, y)?;
        let (tikhonov, zw) = match (&self.regularization, z) {
            (Regularization::None, _) => (0.0, None),
            (Regularization::Tikhonov { lambda }, _) => (*lambda, None),
            (Regularization::Differential { lambdas }, Some(z)) => {
                (0.0, Some((z, basis_weights(lambdas, self.scaling.as_ref()))))
            }
            (Regularization::Differential { .. }, None) => {
                return Err(Error::param("z", "differential objective needs derivative labels"))
            }
        };
        let problem = Problem {
            basis: &self.basis,
            scaling: self.scaling.as_ref(),
            x,
            y,
            z: zw,
            tikhonov,
        };
        let (a, b) = problem.normal_equation();
        let g = (a * DVector::from_column_slice(beta) - b) * 2.0;
        Ok(g.iter().copied().collect())
    }
}

/// Random split of `0..m` into training and test indices.
pub fn train_test_split(m: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::param("test_fraction", "must be in [0, 1]"));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (m as f64 * test_fraction).round() as usize;
    let test = idx.split_off(m - n_test);
    Ok((idx, test))
}

/// Rows of `x` at the given indices.
pub fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}
