//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet3`] is a number of the form
//!
//! ```text
//!   a + Σ a_i ε_i + Σ a_ij ε_i ε_j + a_123 ε_1 ε_2 ε_3,     ε_i² = 0,
//! ```
//!
//! i.e. a function of three nilpotent seeds truncated to square-free
//! monomials. Evaluating `f(p + ε_1 u + ε_2 v + ε_3 w)` leaves the mixed
//! directional derivative `∂_u ∂_v ∂_w f(p)` in the `ε_1 ε_2 ε_3`
//! coefficient, exact to roundoff. Repeating a direction in two seeds gives
//! pure higher derivatives, so this covers every derivative of total order
//! at most three in at most three directions.
//!
//! Coefficients are stored by seed bitmask: index `0b101` holds `ε_1 ε_3`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

/// Number of seed directions a [`Jet3`] carries.
pub const SEEDS: usize = 3;
const LEN: usize = 1 << SEEDS;
/// Bitmask of the `ε_1 ε_2 ε_3` coefficient.
pub const ALL_SEEDS: usize = LEN - 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{op}: argument {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("{op}: non-finite result")]
    NonFinite { op: &'static str },
}

pub type Result<T> = std::result::Result<T, JetError>;

#[derive(Clone, Copy, PartialEq)]
pub struct Jet3 {
    c: [f64; LEN],
}

impl fmt::Debug for Jet3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet3{:?}", self.c)
    }
}

impl Default for Jet3 {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl From<f64> for Jet3 {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl Jet3 {
    pub const fn constant(v: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = v;
        Self { c }
    }

    /// `value + Σ_k dirs[k] ε_{k+1}`.
    pub fn seeded(value: f64, dirs: [f64; SEEDS]) -> Self {
        let mut c = [0.0; LEN];
        c[0] = value;
        for (k, d) in dirs.iter().enumerate() {
            c[1 << k] = *d;
        }
        Self { c }
    }

    pub fn from_coeffs(c: [f64; LEN]) -> Self {
        Self { c }
    }

    pub fn coeffs(&self) -> &[f64; LEN] {
        &self.c
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Coefficient of the monomial `Π_{k ∈ mask} ε_k`.
    #[inline]
    pub fn coeff(&self, mask: usize) -> f64 {
        self.c[mask]
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    /// Multiply by the seed `ε_{seed+1}`.
    pub fn times_seed(&self, seed: usize) -> Self {
        let bit = 1 << seed;
        let mut c = [0.0; LEN];
        for (mask, slot) in c.iter_mut().enumerate() {
            if mask & bit != 0 {
                *slot = self.c[mask ^ bit];
            }
        }
        Self { c }
    }

    /// Compose a scalar function with this jet given its value and first
    /// three derivatives at the order-0 part.
    fn compose(&self, d: [f64; 4]) -> Self {
        let mut delta = *self;
        delta.c[0] = 0.0;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let mut out = Self::constant(d[0]);
        for m in 1..LEN {
            out.c[m] = d[1] * delta.c[m] + 0.5 * d[2] * d2.c[m] + d[3] / 6.0 * d3.c[m];
        }
        out
    }

    fn finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(JetError::NonFinite { op })
        }
    }

    pub fn exp(&self) -> Result<Self> {
        let e = self.c[0].exp();
        self.compose([e, e, e, e]).finite("exp")
    }

    pub fn ln(&self) -> Result<Self> {
        let x = self.c[0];
        if !(x > 0.0) {
            return Err(JetError::Domain { op: "log", value: x });
        }
        let r = 1.0 / x;
        self.compose([x.ln(), r, -r * r, 2.0 * r * r * r]).finite("log")
    }

    pub fn sqrt(&self) -> Result<Self> {
        let x = self.c[0];
        if !(x > 0.0) {
            return Err(JetError::Domain { op: "sqrt", value: x });
        }
        let s = x.sqrt();
        self.compose([s, 0.5 / s, -0.25 / (s * x), 0.375 / (s * x * x)])
            .finite("sqrt")
    }

    pub fn sin(&self) -> Result<Self> {
        let (s, c) = self.c[0].sin_cos();
        self.compose([s, c, -s, -c]).finite("sin")
    }

    pub fn cos(&self) -> Result<Self> {
        let (s, c) = self.c[0].sin_cos();
        self.compose([c, -s, -c, s]).finite("cos")
    }

    pub fn recip(&self) -> Result<Self> {
        let x = self.c[0];
        if x == 0.0 {
            return Err(JetError::Domain { op: "division", value: x });
        }
        let r = 1.0 / x;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
            .finite("division")
    }

    pub fn checked_div(&self, rhs: &Self) -> Result<Self> {
        Ok(*self * rhs.recip()?).and_then(|v| v.finite("division"))
    }

    /// Integer power; zero base with a negative exponent is a domain error.
    pub fn powi(&self, n: i32) -> Result<Self> {
        let x = self.c[0];
        if n < 0 && x == 0.0 {
            return Err(JetError::Domain { op: "power", value: x });
        }
        let n_f = n as f64;
        let p = |k: i32| if n >= 0 && k > n { 0.0 } else { x.powi(n - k) };
        self.compose([
            p(0),
            n_f * p(1),
            n_f * (n_f - 1.0) * p(2),
            n_f * (n_f - 1.0) * (n_f - 2.0) * p(3),
        ])
        .finite("power")
    }

    pub fn square(&self) -> Self {
        *self * *self
    }
}

impl Add for Jet3 {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for Jet3 {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a += b;
        }
    }
}

impl Sub for Jet3 {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl SubAssign for Jet3 {
    fn sub_assign(&mut self, rhs: Self) {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a -= b;
        }
    }
}

impl Neg for Jet3 {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in self.c.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul for Jet3 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; LEN];
        for (s, slot) in c.iter_mut().enumerate() {
            // Sum over all splits of the monomial s into disjoint a ∪ b.
            let mut a = s;
            loop {
                *slot += self.c[a] * rhs.c[s ^ a];
                if a == 0 {
                    break;
                }
                a = (a - 1) & s;
            }
        }
        Self { c }
    }
}

impl MulAssign for Jet3 {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl Add<f64> for Jet3 {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet3 {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet3 {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in self.c.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl Mul<Jet3> for f64 {
    type Output = Jet3;
    fn mul(self, rhs: Jet3) -> Jet3 {
        rhs * self
    }
}

impl Add<Jet3> for f64 {
    type Output = Jet3;
    fn add(self, rhs: Jet3) -> Jet3 {
        rhs + self
    }
}

impl Sub<Jet3> for f64 {
    type Output = Jet3;
    fn sub(self, rhs: Jet3) -> Jet3 {
        -rhs + self
    }
}

impl std::iter::Sum for Jet3 {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Jet3::constant(0.0), |a, b| a + b)
    }
}

/// A smooth scalar function that can be evaluated on jets.
pub trait SmoothFn: Send + Sync {
    fn arity(&self) -> usize;
    fn eval(&self, x: &[Jet3]) -> Result<Jet3>;

    fn eval_f64(&self, x: &[f64]) -> Result<f64> {
        let jets: Vec<Jet3> = x.iter().map(|&v| Jet3::constant(v)).collect();
        Ok(self.eval(&jets)?.value())
    }
}

/// A smooth map `ℝ^arity → ℝ^out_dim` evaluable on jets.
pub trait VectorFn: Send + Sync {
    fn arity(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, x: &[Jet3]) -> Result<Vec<Jet3>>;

    fn eval_f64(&self, x: &[f64]) -> Result<Vec<f64>> {
        let jets: Vec<Jet3> = x.iter().map(|&v| Jet3::constant(v)).collect();
        Ok(self.eval(&jets)?.iter().map(Jet3::value).collect())
    }
}

type ScalarClosure = dyn Fn(&[Jet3]) -> Result<Jet3> + Send + Sync;
type VectorClosure = dyn Fn(&[Jet3]) -> Result<Vec<Jet3>> + Send + Sync;

/// [`SmoothFn`] backed by a closure.
#[derive(Clone)]
pub struct FnScalar {
    arity: usize,
    f: Arc<ScalarClosure>,
}

impl FnScalar {
    pub fn new(
        arity: usize,
        f: impl Fn(&[Jet3]) -> Result<Jet3> + Send + Sync + 'static,
    ) -> Self {
        Self { arity, f: Arc::new(f) }
    }
}

impl SmoothFn for FnScalar {
    fn arity(&self) -> usize {
        self.arity
    }
    fn eval(&self, x: &[Jet3]) -> Result<Jet3> {
        check_dim(self.arity, x.len())?;
        (self.f)(x)
    }
}

/// [`VectorFn`] backed by a closure.
#[derive(Clone)]
pub struct FnVector {
    arity: usize,
    out_dim: usize,
    f: Arc<VectorClosure>,
}

impl FnVector {
    pub fn new(
        arity: usize,
        out_dim: usize,
        f: impl Fn(&[Jet3]) -> Result<Vec<Jet3>> + Send + Sync + 'static,
    ) -> Self {
        Self { arity, out_dim, f: Arc::new(f) }
    }

    /// `x ↦ A x`.
    pub fn linear(a: DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        Self::new(cols, rows, move |x| {
            Ok((0..rows)
                .map(|i| (0..cols).map(|j| x[j] * a[(i, j)]).sum())
                .collect())
        })
    }
}

impl VectorFn for FnVector {
    fn arity(&self) -> usize {
        self.arity
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval(&self, x: &[Jet3]) -> Result<Vec<Jet3>> {
        check_dim(self.arity, x.len())?;
        let out = (self.f)(x)?;
        check_dim(self.out_dim, out.len())?;
        Ok(out)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(JetError::Dimension { expected, got })
    }
}

/// Evaluate `f(p + Σ_k ε_k dirs[k])` for up to three directions.
pub fn eval_seeded(f: &dyn SmoothFn, p: &[f64], dirs: &[&[f64]]) -> Result<Jet3> {
    check_dim(f.arity(), p.len())?;
    debug_assert!(dirs.len() <= SEEDS);
    for d in dirs {
        check_dim(f.arity(), d.len())?;
    }
    let x: Vec<Jet3> = (0..p.len())
        .map(|i| {
            let mut s = [0.0; SEEDS];
            for (k, d) in dirs.iter().enumerate() {
                s[k] = d[i];
            }
            Jet3::seeded(p[i], s)
        })
        .collect();
    let y = f.eval(&x)?;
    y.finite("output")
}

/// `d/dt f(p + t v)` at `t = 0`.
pub fn deriv1(f: &dyn SmoothFn, p: &[f64], v: &[f64]) -> Result<f64> {
    Ok(eval_seeded(f, p, &[v])?.coeff(0b001))
}

/// Mixed second directional derivative `∂_v ∂_w f(p)`.
pub fn deriv2(f: &dyn SmoothFn, p: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    Ok(eval_seeded(f, p, &[v, w])?.coeff(0b011))
}

/// Mixed third directional derivative `∂_u ∂_v ∂_w f(p)`.
pub fn deriv3(f: &dyn SmoothFn, p: &[f64], u: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    Ok(eval_seeded(f, p, &[u, v, w])?.coeff(ALL_SEEDS))
}

/// Full gradient, one seeded evaluation per coordinate.
pub fn gradient(f: &dyn SmoothFn, p: &[f64]) -> Result<Vec<f64>> {
    let n = p.len();
    (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            deriv1(f, p, &e)
        })
        .collect()
}

/// Matrix of first partials of a vector-valued map.
pub fn jacobian(f: &dyn VectorFn, p: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(f.arity(), p.len())?;
    let n = p.len();
    let m = f.out_dim();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let x: Vec<Jet3> = (0..n)
            .map(|i| Jet3::seeded(p[i], [if i == j { 1.0 } else { 0.0 }, 0.0, 0.0]))
            .collect();
        let y = f.eval(&x)?;
        check_dim(m, y.len())?;
        for (i, yi) in y.iter().enumerate() {
            let d = yi.coeff(0b001);
            if !d.is_finite() {
                return Err(JetError::NonFinite { op: "output" });
            }
            jac[(i, j)] = d;
        }
    }
    Ok(jac)
}
