//! Forward-mode dual numbers.
//!
//! `Dual<T>` carries a primal `re` and a single tangent `eps` with
//! `eps² = 0`. Nesting once (`Dual<Dual<f64>>`) yields exact second
//! derivatives along one or two seeded directions.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    /// A variable seeded with unit tangent.
    pub fn var(re: T) -> Self {
        Dual { re, eps: T::one() }
    }

    /// A constant (zero tangent).
    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }

    /// Applies a scalar function with known derivative: `f(re) + f'(re)·eps`.
    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Dual { re: f, eps: df * self.eps }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.re * o.eps + self.eps * o.re }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual { re: q, eps: (self.eps - q * o.eps) / o.re }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Dual { re: self.re + c, eps: self.eps }
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Dual { re: self.re - c, eps: self.eps }
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Dual { re: self.re * c, eps: self.eps * c }
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Dual { re: self.re / c, eps: self.eps / c }
    }
}

impl<T: Real> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual::constant(T::cst(v))
    }

    #[inline]
    fn value(&self) -> f64 {
        self.re.value()
    }

    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, T::one() - t * t)
    }

    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }

    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }

    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }

    fn ln(self) -> Self {
        self.chain(self.re.ln(), T::one() / self.re)
    }

    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, T::one() / (s * 2.0))
    }

    fn abs(self) -> Self {
        if self.re.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            1 => self,
            _ => self.chain(self.re.powi(n), self.re.powi(n - 1) * n as f64),
        }
    }

    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type DD = Dual<Dual<f64>>;

    fn seed2(x: f64) -> DD {
        Dual::new(Dual::var(x), Dual::constant(1.0))
    }

    #[test]
    fn first_derivatives_of_primitives() {
        let x = 0.7;
        let d = Dual::var(x);
        assert!((d.tanh().eps - (1.0 - x.tanh().powi(2))).abs() < 1e-15);
        assert!((d.sin().eps - x.cos()).abs() < 1e-15);
        assert!((d.exp().eps - x.exp()).abs() < 1e-15);
        assert!((d.ln().eps - 1.0 / x).abs() < 1e-15);
        assert!((d.sqrt().eps - 0.5 / x.sqrt()).abs() < 1e-15);
        assert!((d.powi(3).eps - 3.0 * x * x).abs() < 1e-15);
        assert_eq!(Dual::var(-2.0).abs().eps, -1.0);
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        let x = 2.0;
        let y = seed2(x).powi(3);
        assert_eq!(y.re.re, 8.0);
        assert_eq!(y.re.eps, 12.0);
        assert_eq!(y.eps.re, 12.0);
        assert_eq!(y.eps.eps, 12.0);
        let c = seed2(0.0).cos();
        assert_eq!(c.eps.eps, -1.0);
    }

    #[test]
    fn division_matches_quotient_rule() {
        let a = Dual::new(3.0, 1.0);
        let b = Dual::new(2.0, 0.5);
        let q = a / b;
        assert_eq!(q.re, 1.5);
        assert!((q.eps - (1.0 * 2.0 - 3.0 * 0.5) / 4.0).abs() < 1e-15);
    }
}
