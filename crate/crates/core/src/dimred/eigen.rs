//! Symmetric eigen-decomposition by cyclic Jacobi rotations.
//!
//! The one-sided variant is used: rotations act on contiguous columns only,
//! which keeps memory access sequential. Cost is `O(n^3)` per sweep and the
//! number of sweeps grows slowly with `n` (typically 6 to 12). The
//! accumulated eigenvectors are orthonormal to a few ulps times `n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;
/// Columns count as orthogonal when `|w_p . w_q| <= tol |w_p| |w_q|`.
const ORTHOGONALITY_TOL: f64 = 1e-15;
/// Eigenvalues below `-NEGATIVE_TOL * spectral radius` mark an indefinite input.
const NEGATIVE_TOL: f64 = 1e-12;

/// Which covariance an eigen-decomposition was taken of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// An arbitrary symmetric matrix.
    Matrix,
    State,
    Risk,
    Differential,
}

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Orthonormal eigenvectors in columns.
    pub vectors: DMatrix<f64>,
    /// Eigenvalues sorted in decreasing order.
    pub values: DVector<f64>,
    pub source: Source,
    pub central: bool,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `P diag(D) P^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.vectors[(i, j)] * self.values[j]);
        &scaled * self.vectors.transpose()
    }
}

pub(crate) fn max_asymmetry(c: &DMatrix<f64>) -> f64 {
    let n = c.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix.
///
/// Eigenvalues are sorted in decreasing order and every eigenvector is signed
/// so that its largest-magnitude component is positive.
pub fn eigen_sym(c: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "eigen_sym (square matrix)",
            expected: n,
            actual: c.ncols(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in symmetric matrix".into()));
    }
    let scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let asym = max_asymmetry(c);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Asymmetric { max_asymmetry: asym });
    }

    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let (mut values, mut vectors) = one_sided_jacobi(&sym, 0.0)?;
    let radius = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if values.iter().any(|v| *v < -NEGATIVE_TOL * radius) {
        // Singular vectors of an indefinite matrix need not be eigenvectors
        // when eigenvalues of opposite sign share a magnitude; a shift makes
        // the matrix positive semi-definite.
        (values, vectors) = one_sided_jacobi(&sym, radius)?;
        values.iter_mut().for_each(|v| *v -= radius);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let mut out = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let v = &vectors[i * n..(i + 1) * n];
        let pivot = v.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (k, x) in v.iter().enumerate() {
            out[(k, col)] = sign * x;
        }
    }
    Ok(EigenDecomposition {
        vectors: out,
        values: sorted,
        source: Source::Matrix,
        central: false,
    })
}

/// One-sided (Hestenes) cyclic Jacobi on `a + shift I`: plane rotations `V`
/// are applied to the columns of `W = (a + shift I) V` until the columns are
/// mutually orthogonal. Then `W = V diag(lambda)`, so each column of `V` is an
/// eigenvector and `lambda_j = v_j . w_j`.
///
/// Returns unsorted eigenvalues of `a + shift I` and the eigenvectors,
/// column-major.
fn one_sided_jacobi(a: &DMatrix<f64>, shift: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.nrows();
    let mut w: Vec<f64> = a.as_slice().to_vec();
    for i in 0..n {
        w[i * n + i] += shift;
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let fro2: f64 = w.iter().map(|x| x * x).sum();
    let abs_floor = 1e-34 * fro2;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (wp, wq) = column_pair(&mut w, n, p, q);
                let (alpha, beta, gamma) = dots(wp, wq);
                if gamma.abs() <= abs_floor || gamma.abs() <= ORTHOGONALITY_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (zeta * zeta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(wp, wq, c, s);
                let (vp, vq) = column_pair(&mut v, n, p, q);
                rotate(vp, vq, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps")));
    }
    let values = (0..n)
        .map(|j| {
            let wj = &w[j * n..(j + 1) * n];
            let vj = &v[j * n..(j + 1) * n];
            let norm = wj.iter().map(|x| x * x).sum::<f64>().sqrt();
            let proj: f64 = wj.iter().zip(vj).map(|(a, b)| a * b).sum();
            if proj < 0.0 {
                -norm
            } else {
                norm
            }
        })
        .collect();
    Ok((values, v))
}

fn column_pair(m: &mut [f64], n: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = m.split_at_mut(q * n);
    (&mut head[p * n..(p + 1) * n], &mut tail[..n])
}

/// `(|x|^2, |y|^2, x . y)` with independent partial sums so the loop
/// vectorizes.
#[inline]
fn dots(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut a = [0.0; 4];
    let mut b = [0.0; 4];
    let mut g = [0.0; 4];
    let xc = x.chunks_exact(4);
    let yc = y.chunks_exact(4);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for k in 0..4 {
            a[k] += xs[k] * xs[k];
            b[k] += ys[k] * ys[k];
            g[k] += xs[k] * ys[k];
        }
    }
    let mut alpha = a.iter().sum::<f64>();
    let mut beta = b.iter().sum::<f64>();
    let mut gamma = g.iter().sum::<f64>();
    for (u, w) in xr.iter().zip(yr) {
        alpha += u * u;
        beta += w * w;
        gamma += u * w;
    }
    (alpha, beta, gamma)
}

/// `(x, y) <- (c x - s y, s x + c y)`.
#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (u, w) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*u, *w);
        *u = c * a - s * b;
        *w = s * a + c * b;
    }
}
