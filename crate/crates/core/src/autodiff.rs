//! Reverse-mode automatic differentiation on a per-path recording.
//!
//! A [`Tape`] records every elementary operation performed on [`Var`]s as a
//! node holding at most two argument ids and the matching local partial
//! derivatives. Nodes are appended in evaluation order, so argument ids always
//! precede the node that uses them and a single backward sweep over the
//! records yields the full gradient.
//!
//! Pricing code is written once, generically over [`Real`], and runs either on
//! plain `f64` (fast pricing, bump-and-reprice checks) or on [`Var`] (pathwise
//! differentials). Both produce bit-identical values.
//!
//! Recordings are single-threaded and meant to be short lived: one tape per
//! Monte-Carlo path. There is no checkpointing, which keeps paths of a few
//! hundred time steps over a few dozen state variables (well under a million
//! nodes) comfortably in memory.

use std::cell::RefCell;
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

/// Scalar arithmetic shared by `f64` and [`Var`].
pub trait Real:
    Copy
    + Debug
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
{
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Standard normal cumulative distribution function.
    fn norm_cdf(self) -> Self;
    /// Softplus-smoothed maximum; `width` must be positive (see [`smooth_max`]).
    fn soft_max(self, other: Self, width: f64) -> Self;
}

pub(crate) fn norm_cdf_f64(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn norm_pdf_f64(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Value and partials of `w * ln(exp(a/w) + exp(b/w))`, evaluated stably.
#[inline]
fn soft_max_parts(a: f64, b: f64, width: f64) -> (f64, f64, f64) {
    let d = a - b;
    let e = (-d.abs() / width).exp();
    let value = a.max(b) + width * e.ln_1p();
    let da = if d >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (value, da, 1.0 - da)
}

/// C-infinity softening of `max(a, b)`:
/// `max(a, b) + width * ln(1 + exp(-|a - b| / width))`.
///
/// The result lies in `[max, max + width * ln 2]`, is symmetric in its
/// arguments, converges to the hard maximum as `width -> 0` and has partials
/// `sigmoid((a - b) / width)` and `sigmoid((b - a) / width)`.
pub fn smooth_max<R: Real>(a: R, b: R, width: f64) -> Result<R> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::param("width", format!("must be positive, got {width}")));
    }
    Ok(a.soft_max(b, width))
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn norm_cdf(self) -> Self {
        norm_cdf_f64(self)
    }
    #[inline]
    fn soft_max(self, other: Self, width: f64) -> Self {
        soft_max_parts(self, other, width).0
    }
}

#[derive(Clone, Copy, Debug)]
struct Record {
    args: [u32; 2],
    partials: [f64; 2],
    value: f64,
}

/// An operation recording (the "tape").
#[derive(Debug, Default)]
pub struct Tape {
    records: RefCell<Vec<Record>>,
    inputs: RefCell<Vec<u32>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            records: RefCell::new(Vec::with_capacity(n)),
            inputs: RefCell::new(Vec::new()),
        }
    }

    /// Registers a new independent variable.
    pub fn input(&self, x: f64) -> Var<'_> {
        let idx = self.push(x, [NONE, NONE], [0.0, 0.0]);
        self.inputs.borrow_mut().push(idx);
        Var {
            tape: Some(self),
            idx,
            val: x,
        }
    }

    pub fn inputs(&self, xs: &[f64]) -> Vec<Var<'_>> {
        xs.iter().map(|&x| self.input(x)).collect()
    }

    /// Number of records on the tape (inputs included).
    pub fn len(&self) -> usize {
        self.records.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.borrow().len()
    }

    /// Drops all records so the allocation can be reused for another path.
    pub fn clear(&mut self) {
        self.records.get_mut().clear();
        self.inputs.get_mut().clear();
    }

    #[inline]
    fn push(&self, value: f64, args: [u32; 2], partials: [f64; 2]) -> u32 {
        let mut records = self.records.borrow_mut();
        let idx = records.len();
        assert!(idx < NONE as usize, "tape overflow");
        records.push(Record {
            args,
            partials,
            value,
        });
        idx as u32
    }

    /// Gradient of `output` with respect to the registered inputs, in
    /// registration order, by one reverse sweep.
    pub fn gradient(&self, output: Var<'_>) -> Result<Vec<f64>> {
        let inputs = self.inputs.borrow();
        let Some(tape) = output.tape else {
            return Ok(vec![0.0; inputs.len()]);
        };
        debug_assert!(std::ptr::eq(tape, self), "output recorded on another tape");
        let adjoints = self.adjoints(output.idx as usize)?;
        Ok(inputs.iter().map(|&i| adjoints[i as usize]).collect())
    }

    fn adjoints(&self, output: usize) -> Result<Vec<f64>> {
        let records = self.records.borrow();
        for (node, r) in records[..=output].iter().enumerate() {
            if !r.value.is_finite() || !r.partials[0].is_finite() || !r.partials[1].is_finite() {
                return Err(Error::NonFinite { node });
            }
        }
        let mut adj = vec![0.0; output + 1];
        adj[output] = 1.0;
        for i in (0..=output).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let r = &records[i];
            if r.args[0] != NONE {
                adj[r.args[0] as usize] += a * r.partials[0];
            }
            if r.args[1] != NONE {
                adj[r.args[1] as usize] += a * r.partials[1];
            }
        }
        Ok(adj)
    }
}

/// A scalar tracked on a [`Tape`]. Constants carry no tape.
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Self {
            tape: None,
            idx: NONE,
            val,
        }
    }

    /// Tape node id, or `None` for a constant.
    pub fn node_id(&self) -> Option<usize> {
        self.tape.map(|_| self.idx as usize)
    }

    #[inline]
    fn unary(self, value: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(value, [self.idx, NONE], [d, 0.0]),
                val: value,
            },
        }
    }

    #[inline]
    fn binary(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        match (self.tape, other.tape) {
            (None, None) => Var::constant(value),
            (Some(_), None) => self.unary(value, da),
            (None, Some(_)) => other.unary(value, db),
            (Some(t), Some(u)) => {
                debug_assert!(std::ptr::eq(t, u), "mixing variables from different tapes");
                Var {
                    tape: Some(t),
                    idx: t.push(value, [self.idx, other.idx], [da, db]),
                    val: value,
                }
            }
        }
    }
}

impl From<f64> for Var<'_> {
    fn from(v: f64) -> Self {
        Var::constant(v)
    }
}

impl Add for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.val;
        let value = self.val / rhs.val;
        self.binary(rhs, value, inv, -value * inv)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        self.unary(self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.val * rhs, rhs)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl AddAssign for Var<'_> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for Var<'_> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for Var<'_> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<'t> Sum for Var<'t> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Var::constant(0.0), |acc, v| acc + v)
    }
}

impl Real for Var<'_> {
    #[inline]
    fn value(self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        let v = self.val.exp();
        self.unary(v, v)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn sqrt(self) -> Self {
        let v = self.val.sqrt();
        self.unary(v, 0.5 / v)
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn powi(self, n: i32) -> Self {
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.unary(self.val.powi(n), d)
    }
    fn norm_cdf(self) -> Self {
        self.unary(norm_cdf_f64(self.val), norm_pdf_f64(self.val))
    }
    fn soft_max(self, other: Self, width: f64) -> Self {
        let (v, da, db) = soft_max_parts(self.val, other.val, width);
        self.binary(other, v, da, db)
    }
}

/// Records `f` at `x` and returns its value and gradient.
pub fn record_and_differentiate<F>(f: F, x: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&[Var<'t>]) -> Var<'t>,
{
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::param("x", format!("non-finite input at coordinate {i}")));
    }
    let tape = Tape::new();
    let inputs = tape.inputs(x);
    let y = f(&inputs);
    let z = tape.gradient(y)?;
    Ok((y.value(), z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PathRng;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    fn central_fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[i] += h;
                dn[i] -= h;
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn product_plus_sine() {
        let (y, z) = record_and_differentiate(|x| x[0] * x[1] + x[0].sin(), &[1.0, 2.0]).unwrap();
        assert_eq!(y, 2.0 + 1f64.sin());
        assert!((z[0] - (2.0 + 1f64.cos())).abs() < 1e-15);
        assert_eq!(z[1], 1.0);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let (y, z) = record_and_differentiate(|_| Var::constant(3.5), &[1.0, -2.0, 4.0]).unwrap();
        assert_eq!(y, 3.5);
        assert_eq!(z, vec![0.0; 3]);
    }

    /// Random cubic in 5 variables: sum of c * x_i * x_j * x_k over random triples
    /// (index 5 stands for the constant 1, giving lower-degree terms too).
    fn cubic<R: Real>(coef: &[(f64, [usize; 3])], x: &[R]) -> R {
        let one = R::from(1.0);
        coef.iter()
            .map(|(c, idx)| {
                let g = |i: usize| if i == 5 { one } else { x[i] };
                g(idx[0]) * g(idx[1]) * g(idx[2]) * *c
            })
            .sum()
    }

    #[test]
    fn random_cubic_matches_finite_differences() {
        let mut rng = PathRng::new(11, 0, 0);
        let coef: Vec<(f64, [usize; 3])> = (0..30)
            .map(|_| {
                let c = rng.normal();
                let idx = [0, 1, 2].map(|_| (rng.uniform() * 6.0) as usize % 6);
                (c, idx)
            })
            .collect();
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let (y, z) = record_and_differentiate(|v| cubic(&coef, v), &x).unwrap();
            assert_eq!(y, cubic(&coef, &x));
            let fd = central_fd(|v| cubic(&coef, v), &x, 1e-5);
            assert!(rel_err(&z, &fd) <= 1e-6, "{z:?} vs {fd:?}");
        }
    }

    #[test]
    fn primitives_match_finite_differences() {
        type F = fn(f64) -> f64;
        let cases: Vec<(&str, F, fn(Var) -> Var, f64)> = vec![
            ("exp", f64::exp, |v| v.exp(), 0.7),
            ("ln", f64::ln, |v| v.ln(), 1.3),
            ("sqrt", f64::sqrt, |v| v.sqrt(), 2.1),
            ("sin", f64::sin, |v| v.sin(), 0.4),
            ("cos", f64::cos, |v| v.cos(), 0.4),
            ("powi", |x| x.powi(3), |v| v.powi(3), 1.2),
            ("cdf", norm_cdf_f64, |v| v.norm_cdf(), -0.3),
            ("div", |x| 1.5 / x, |v| Var::constant(1.5) / v, 0.8),
            ("softmax", |x| x.soft_max(0.2, 0.1), |v| v.soft_max(Var::constant(0.2), 0.1), 0.25),
        ];
        for (name, f, g, x0) in cases {
            let (y, z) = record_and_differentiate(|v| g(v[0]), &[x0]).unwrap();
            assert_eq!(y.to_bits(), f(x0).to_bits(), "{name} value");
            let fd = central_fd(|v| f(v[0]), &[x0], 1e-6);
            assert!(rel_err(&z, &fd) <= 1e-6, "{name}: {z:?} vs {fd:?}");
        }
    }

    #[test]
    fn smooth_max_properties() {
        // hard-max limit
        let v: f64 = smooth_max(1.0, 0.0, 1e-6).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // symmetry
        for w in [0.01, 0.5, 3.0] {
            let a: f64 = smooth_max(0.0, 0.0, w).unwrap();
            assert_eq!(a, w * 2f64.ln());
            let (p, q): (f64, f64) = (smooth_max(0.3, -1.2, w).unwrap(), smooth_max(-1.2, 0.3, w).unwrap());
            assert_eq!(p.to_bits(), q.to_bits());
        }
        // a = 0, b = 0.01, width = 0.1
        let (y, z) = record_and_differentiate(|v| smooth_max(v[0], v[1], 0.1).unwrap(), &[0.0, 0.01]).unwrap();
        assert!((0.01..=0.01 + 0.1).contains(&y));
        assert!(z[1] > 0.0 && z[1] < 1.0);
        assert!((z[0] + z[1] - 1.0).abs() < 1e-15);
        assert!(smooth_max(1.0, 0.0, 0.0).is_err());
        assert!(smooth_max(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn non_finite_intermediate_is_reported() {
        let err = record_and_differentiate(|v| (v[0] - 1.0).ln() + v[1], &[1.0, 2.0]).unwrap_err();
        match err {
            Error::NonFinite { node } => assert_eq!(node, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(record_and_differentiate(|v| v[0], &[f64::NAN]).is_err());
    }

    #[test]
    fn gradient_is_linear() {
        fn f<R: Real>(v: &[R]) -> R {
            v[0] * v[1].exp() + v[2].powi(2)
        }
        fn g<R: Real>(v: &[R]) -> R {
            (v[0] + v[2]).sin() * v[1]
        }
        let (alpha, beta) = (1.7, -0.4);
        let x = [0.3, -0.8, 1.1];
        let (_, zf) = record_and_differentiate(|v| f(v), &x).unwrap();
        let (_, zg) = record_and_differentiate(|v| g(v), &x).unwrap();
        let (_, zh) = record_and_differentiate(|v| f(v) * alpha + g(v) * beta, &x).unwrap();
        for i in 0..3 {
            assert!((zh[i] - (alpha * zf[i] + beta * zg[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn tape_length_is_linear_in_operations() {
        let tape = Tape::new();
        let x = tape.input(0.5);
        let mut acc = x;
        for _ in 0..1000 {
            acc = acc * x + 1.0;
        }
        assert_eq!(tape.len(), 1 + 2 * 1000);
        let z = tape.gradient(acc).unwrap();
        assert_eq!(z.len(), 1);
    }
}
