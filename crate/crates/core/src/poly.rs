//! Dense univariate polynomials over a small scalar trait.
//!
//! The same radial expressions are evaluated in `f64` on grids and in exact
//! rationals by the certifier, so they are built once over [`Scalar`].

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Field-like scalar used for polynomial coefficients.
pub trait Scalar:
    Clone
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn ratio(num: i64, den: i64) -> Self;

    fn int(n: i64) -> Self {
        Self::ratio(n, 1)
    }
}

impl Scalar for f64 {
    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

impl Scalar for BigRational {
    fn ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}

/// `c[0] + c[1] x + c[2] x^2 + ...`, trailing zeros trimmed.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn from_ints(c: &[i64]) -> Self {
        Self::new(c.iter().map(|&n| T::int(n)).collect())
    }

    pub fn constant(c: T) -> Self {
        Self::new(vec![c])
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    /// The monomial `x^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![T::zero(); k + 1];
        c[k] = T::one();
        Poly { coeffs: c }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: &T) -> T {
        let mut acc = T::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x.clone() + c.clone();
        }
        acc
    }

    pub fn scale(&self, s: &T) -> Self {
        Self::new(self.coeffs.iter().map(|c| c.clone() * s.clone()).collect())
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::constant(T::one());
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    /// d/dx.
    pub fn deriv(&self) -> Self {
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c.clone() * T::int(k as i64))
            .collect();
        Self::new(c)
    }

    /// Radial derivative in units M = 1 when `x = M/r`: `d/dr = -x^2 d/dx`.
    pub fn d_dr(&self) -> Self {
        -(&Self::monomial(2) * &self.deriv())
    }

    /// Multiplicity of the root at zero.
    pub fn zero_order(&self) -> usize {
        self.coeffs.iter().take_while(|c| c.is_zero()).count()
    }

    /// Divide by `x^k`; the low coefficients must vanish.
    pub fn shift_down(&self, k: usize) -> Self {
        debug_assert!(self.zero_order() >= k || self.is_zero());
        Self::new(self.coeffs.iter().skip(k).cloned().collect())
    }

    /// Polynomial division by `(x - a)`, returning quotient and remainder.
    pub fn div_linear(&self, a: &T) -> (Self, T) {
        if self.coeffs.is_empty() {
            return (Self::zero(), T::zero());
        }
        let n = self.coeffs.len();
        let mut q = vec![T::zero(); n - 1];
        let mut acc = T::zero();
        for i in (0..n).rev() {
            acc = acc * a.clone() + self.coeffs[i].clone();
            if i > 0 {
                q[i - 1] = acc.clone();
            }
        }
        (Self::new(q), acc)
    }
}

impl<T: Scalar> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, o: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(o.coeffs.len());
        let c = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                let b = o.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                a + b
            })
            .collect();
        Poly::new(c)
    }
}

impl<T: Scalar> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, o: &Poly<T>) -> Poly<T> {
        self + &(-o)
    }
}

impl<T: Scalar> Neg for &Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        Poly::new(self.coeffs.iter().map(|c| -c.clone()).collect())
    }
}

impl<T: Scalar> Neg for Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        -&self
    }
}

impl<T: Scalar> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, o: &Poly<T>) -> Poly<T> {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![T::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                c[i + j] = c[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly::new(c)
    }
}

macro_rules! owned_binop {
    ($tr:ident, $m:ident) => {
        impl<T: Scalar> $tr for Poly<T> {
            type Output = Poly<T>;
            fn $m(self, o: Poly<T>) -> Poly<T> {
                (&self).$m(&o)
            }
        }
    };
}
owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_derivative() {
        let p = Poly::<f64>::from_ints(&[1, 1]);
        let q = &p * &p;
        assert_eq!(q.coeffs(), &[1.0, 2.0, 1.0]);
        assert_eq!(q.deriv().coeffs(), &[2.0, 2.0]);
        assert_eq!(q.eval(&2.0), 9.0);
    }

    #[test]
    fn radial_derivative_of_inverse_radius() {
        // x = 1/r so d/dr x = -1/r^2 = -x^2
        let x = Poly::<f64>::monomial(1);
        assert_eq!(x.d_dr().coeffs(), &[0.0, 0.0, -1.0]);
    }

    #[test]
    fn linear_division_recovers_factor() {
        let p = Poly::<BigRational>::from_ints(&[-3, 1]) * Poly::from_ints(&[2, 0, 5]);
        let (q, rem) = p.div_linear(&BigRational::int(3));
        assert!(rem.is_zero());
        assert_eq!(q, Poly::from_ints(&[2, 0, 5]));
    }
}
