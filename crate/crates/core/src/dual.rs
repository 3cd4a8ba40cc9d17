//! Second-order forward-mode numbers along a single direction.
//!
//! `Dual2 { v, d, dd }` carries `f`, `∂f/∂s` and `∂²f/∂s²` for a scalar seed
//! direction `s`. Closed-form solutions are written once over `Dual2<T>` and
//! yield exact first and diagonal second derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2<T> {
    pub v: T,
    pub d: T,
    pub dd: T,
}

impl<T: Real> Dual2<T> {
    pub fn constant(v: T) -> Self {
        Self { v, d: T::zero(), dd: T::zero() }
    }

    /// Independent variable seeded with unit derivative.
    pub fn variable(v: T) -> Self {
        Self { v, d: T::one(), dd: T::zero() }
    }

    pub fn lit(v: f64) -> Self {
        Self::constant(T::lit(v))
    }

    /// Applies a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    fn chain(self, f: T, f1: T, f2: T) -> Self {
        Self { v: f, d: f1 * self.d, dd: f1 * self.dd + f2 * self.d * self.d }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        let s = T::one() - t * t;
        self.chain(t, s, T::lit(-2.0) * t * s)
    }

    pub fn powi(self, n: i32) -> Self {
        let nf = T::from_i32(n).unwrap();
        let f = self.v.powi(n);
        let f1 = if n == 0 { T::zero() } else { nf * self.v.powi(n - 1) };
        let f2 = if n < 2 && n >= 0 { T::zero() } else { nf * (nf - T::one()) * self.v.powi(n - 2) };
        self.chain(f, f1, f2)
    }

    pub fn scale(self, k: T) -> Self {
        Self { v: self.v * k, d: self.d * k, dd: self.dd * k }
    }
}

impl<T: Real> Add for Dual2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, d: self.d + o.d, dd: self.dd + o.dd }
    }
}

impl<T: Real> Sub for Dual2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, d: self.d - o.d, dd: self.dd - o.dd }
    }
}

impl<T: Real> Mul for Dual2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            dd: self.dd * o.v + T::lit(2.0) * self.d * o.d + self.v * o.dd,
        }
    }
}

impl<T: Real> Div for Dual2<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = {
            let r = T::one() / o.v;
            o.chain(r, -r * r, T::lit(2.0) * r * r * r)
        };
        self * inv
    }
}

impl<T: Real> Neg for Dual2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: -self.v, d: -self.d, dd: -self.dd }
    }
}

impl<T: Real> std::iter::Sum for Dual2<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::constant(T::zero()), |a, b| a + b)
    }
}
