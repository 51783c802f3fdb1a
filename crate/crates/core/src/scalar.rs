//! Floating-point abstraction for the model stack.
//!
//! Training, inference, and benchmark code are generic over [`Scalar`] so the
//! same pipeline runs in f64 (gradient checks, determinism tests) and f32
//! (training and timing runs). [`Real`] is the smaller surface needed by the
//! shading math; it is additionally implemented by [`Dual`], a fixed-width
//! forward-mode number used to differentiate the BRDF with respect to its
//! parameters.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use ndarray::{LinalgScalar, ScalarOperand};

/// Element type of feature matrices, network weights, and optimizer state.
pub trait Scalar:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + std::iter::Sum
    + Send
    + Sync
    + fmt::Display
    + fmt::Debug
    + 'static
{
    /// Size of the little-endian encoding in bytes.
    const BYTES: usize;
    /// Dtype tag used by the binary tensor codec.
    const DTYPE: u8;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const DTYPE: u8 = 0;

    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("f32 needs 4 bytes"))
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const DTYPE: u8 = 1;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("f64 needs 8 bytes"))
    }
}

/// Arithmetic surface used by the shading math. Implemented by the plain
/// floats and by [`Dual`], so the same BRDF code yields values or values plus
/// parameter derivatives.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    /// Primal value (derivatives dropped).
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    /// Raise to a constant exponent.
    fn powf_const(self, e: f64) -> Self;

    fn max(self, other: Self) -> Self {
        if self.value() >= other.value() {
            self
        } else {
            other
        }
    }
    fn min(self, other: Self) -> Self {
        if self.value() <= other.value() {
            self
        } else {
            other
        }
    }
    fn clamp01(self) -> Self {
        self.max(Self::from_f64(0.0)).min(Self::from_f64(1.0))
    }
}

impl<T: Scalar> Real for T {
    fn from_f64(x: f64) -> Self {
        <T as Scalar>::from_f64(x)
    }
    fn value(self) -> f64 {
        self.to_f64()
    }
    fn sqrt(self) -> Self {
        num_traits::Float::sqrt(self)
    }
    fn ln(self) -> Self {
        num_traits::Float::ln(self)
    }
    fn powf_const(self, e: f64) -> Self {
        num_traits::Float::powf(self, <T as Scalar>::from_f64(e))
    }
}

/// Forward-mode dual number carrying `N` partial derivatives.
#[derive(Clone, Copy, Debug)]
pub struct Dual<T, const N: usize> {
    pub v: T,
    pub d: [T; N],
}

impl<T: Scalar, const N: usize> Dual<T, N> {
    pub fn constant(v: T) -> Self {
        Dual { v, d: [T::zero(); N] }
    }

    /// A variable seeded with derivative 1 in slot `slot`.
    pub fn variable(v: T, slot: usize) -> Self {
        let mut d = [T::zero(); N];
        d[slot] = T::one();
        Dual { v, d }
    }
}

impl<T: Scalar, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d.iter()) {
            *a += *b;
        }
        Dual { v: self.v + rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d.iter()) {
            *a = *a - *b;
        }
        Dual { v: self.v - rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut d = [T::zero(); N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl<T: Scalar, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = T::one() / rhs.v;
        let inv2 = inv * inv;
        let mut d = [T::zero(); N];
        for i in 0..N {
            d[i] = (self.d[i] * rhs.v - self.v * rhs.d[i]) * inv2;
        }
        Dual { v: self.v * inv, d }
    }
}

impl<T: Scalar, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = -*a;
        }
        Dual { v: -self.v, d }
    }
}

impl<T: Scalar, const N: usize> Real for Dual<T, N> {
    fn from_f64(x: f64) -> Self {
        Dual::constant(<T as Scalar>::from_f64(x))
    }
    fn value(self) -> f64 {
        self.v.to_f64()
    }
    fn sqrt(self) -> Self {
        let root = num_traits::Float::sqrt(self.v);
        // Half-slope from the chain rule; guarded at the origin where the
        // true derivative is unbounded.
        let guard = <T as Scalar>::from_f64(1e-300);
        let scale = (T::one() + T::one()) * root;
        let scale = if scale > guard { scale } else { guard };
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = *a / scale;
        }
        Dual { v: root, d }
    }
    fn ln(self) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = *a / self.v;
        }
        Dual {
            v: num_traits::Float::ln(self.v),
            d,
        }
    }
    fn powf_const(self, e: f64) -> Self {
        let ec = <T as Scalar>::from_f64(e);
        let v = num_traits::Float::powf(self.v, ec);
        let slope = ec * num_traits::Float::powf(self.v, ec - T::one());
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = *a * slope;
        }
        Dual { v, d }
    }
}

/// Linear interpolation `a + (b - a) * t`.
pub fn lerp<S: Real>(a: S, b: S, t: S) -> S {
    a + (b - a) * t
}

#[cfg(test)]
mod tests {
    use super::*;

    type D2 = Dual<f64, 2>;

    #[test]
    fn dual_product_rule() {
        let x = D2::variable(3.0, 0);
        let y = D2::variable(5.0, 1);
        let p = x * y;
        assert_eq!(p.v, 15.0);
        assert_eq!(p.d, [5.0, 3.0]);
    }

    #[test]
    fn dual_quotient_and_sqrt_match_finite_differences() {
        let f = |x: f64| (x * x + 1.0).sqrt() / (x + 2.0);
        let fd = |x: f64| {
            let h = 1e-6;
            (f(x + h) - f(x - h)) / (2.0 * h)
        };
        let x0 = 0.7;
        let x = D2::variable(x0, 0);
        let out = (x * x + D2::from_f64(1.0)).sqrt() / (x + D2::from_f64(2.0));
        assert!((out.v - f(x0)).abs() < 1e-12);
        assert!((out.d[0] - fd(x0)).abs() < 1e-8);
    }

    #[test]
    fn dual_powf_and_ln() {
        let x0 = 1.3;
        let x = D2::variable(x0, 0);
        let y = x.powf_const(2.5).ln();
        assert!((y.v - x0.powf(2.5).ln()).abs() < 1e-12);
        assert!((y.d[0] - 2.5 / x0).abs() < 1e-10);
    }
}
