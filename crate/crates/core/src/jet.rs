//! Truncated univariate Taylor series ("jets").
//!
//! The manufactured solutions in this crate are plane waves, `u(x, t) = U(t + w·x)`,
//! so every space or time derivative of any field built from `u`, the source and
//! the reaction term reduces to a derivative along the phase. Evaluating those
//! fields on a [`Jet`] yields all phase derivatives at once, exactly up to
//! rounding.

use std::ops::{Add, Mul, Neg, Sub};

/// Arithmetic needed to evaluate analytic fields generically on `f64` or on jets.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn constant(c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

/// Taylor coefficients `a_0 + a_1 ε + … + a_{N-1} ε^{N-1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize> {
    coeffs: [f64; N],
}

/// Jet length used by the trace providers (enough for seven nested derivatives).
pub type Jet12 = Jet<12>;

impl<const N: usize> Jet<N> {
    pub fn constant(c: f64) -> Self {
        let mut coeffs = [0.0; N];
        coeffs[0] = c;
        Self { coeffs }
    }

    /// The independent variable at `x0`.
    pub fn variable(x0: f64) -> Self {
        let mut coeffs = [0.0; N];
        coeffs[0] = x0;
        if N > 1 {
            coeffs[1] = 1.0;
        }
        Self { coeffs }
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `n`-th derivative at the expansion point.
    pub fn derivative(&self, n: usize) -> f64 {
        let factorial: f64 = (1..=n).map(|j| j as f64).product();
        self.coeffs[n] * factorial
    }

    /// Jet of the derivative; the highest coefficient is lost.
    pub fn d(&self) -> Self {
        let mut coeffs = [0.0; N];
        for k in 0..N - 1 {
            coeffs[k] = (k + 1) as f64 * self.coeffs[k + 1];
        }
        Self { coeffs }
    }

    /// `n`-fold derivative.
    pub fn dn(&self, n: usize) -> Self {
        (0..n).fold(*self, |acc, _| acc.d())
    }

    fn sin_cos(self) -> (Self, Self) {
        let a = &self.coeffs;
        let mut s = [0.0; N];
        let mut c = [0.0; N];
        s[0] = a[0].sin();
        c[0] = a[0].cos();
        for k in 1..N {
            let mut sk = 0.0;
            let mut ck = 0.0;
            for j in 1..=k {
                sk += j as f64 * a[j] * c[k - j];
                ck -= j as f64 * a[j] * s[k - j];
            }
            s[k] = sk / k as f64;
            c[k] = ck / k as f64;
        }
        (Self { coeffs: s }, Self { coeffs: c })
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in self.coeffs.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut coeffs = [0.0; N];
        for i in 0..N {
            if self.coeffs[i] == 0.0 {
                continue;
            }
            for j in 0..N - i {
                coeffs[i + j] += self.coeffs[i] * rhs.coeffs[j];
            }
        }
        Self { coeffs }
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.coeffs[0] += rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in self.coeffs.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl<const N: usize> Scalar for Jet<N> {
    fn constant(c: f64) -> Self {
        Jet::constant(c)
    }
    fn sin(self) -> Self {
        self.sin_cos().0
    }
    fn cos(self) -> Self {
        self.sin_cos().1
    }
}
