//! Arithmetic backends for the simplex tableau.
//!
//! The solver is generic over [`Field`]; `f64` is the fast path and
//! [`BigRational`] gives exact pivoting for small instances.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Absolute threshold below which a float is treated as zero by the
/// pivoting rules.
pub const PIVOT_EPS: f64 = 1e-9;

pub trait Field: Clone + Debug + Send + Sync {
    /// Whether comparisons are exact (no tolerance).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;

    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn abs(&self) -> Self;

    /// `self -= a * b`
    fn sub_mul_assign(&mut self, a: &Self, b: &Self);

    fn is_zero(&self) -> bool;
    fn is_positive(&self) -> bool;
    fn is_negative(&self) -> bool;
    /// Exact-zero test, used for sparsity rather than pivot decisions.
    fn is_exact_zero(&self) -> bool;
    fn lt(&self, other: &Self) -> bool;
    /// Ties in the ratio test.
    fn approx_eq(&self, other: &Self) -> bool;
}

impl Field for f64 {
    const EXACT: bool = false;

    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        *self
    }
    #[inline]
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    #[inline]
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    #[inline]
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    #[inline]
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    #[inline]
    fn neg(&self) -> Self {
        -self
    }
    #[inline]
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    #[inline]
    fn sub_mul_assign(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
    }
    #[inline]
    fn is_zero(&self) -> bool {
        f64::abs(*self) <= PIVOT_EPS
    }
    #[inline]
    fn is_positive(&self) -> bool {
        *self > PIVOT_EPS
    }
    #[inline]
    fn is_negative(&self) -> bool {
        *self < -PIVOT_EPS
    }
    #[inline]
    fn is_exact_zero(&self) -> bool {
        *self == 0.0
    }
    #[inline]
    fn lt(&self, other: &Self) -> bool {
        self < other
    }
    #[inline]
    fn approx_eq(&self, other: &Self) -> bool {
        f64::abs(self - other) <= 1e-12 * (1.0 + f64::abs(*self).max(f64::abs(*other)))
    }
}

impl Field for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn from_f64(x: f64) -> Self {
        rational_from_decimal(x)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn sub_mul_assign(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn is_exact_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn lt(&self, other: &Self) -> bool {
        self < other
    }
    fn approx_eq(&self, other: &Self) -> bool {
        self == other
    }
}

/// Converts a float to the rational number its shortest decimal rendering
/// denotes, so `0.05` becomes exactly `1/20` rather than the nearest dyadic.
pub fn rational_from_decimal(x: f64) -> BigRational {
    assert!(x.is_finite(), "non-finite value {x} cannot be made rational");
    let text = format!("{x}");
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let numer: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .expect("float display is always decimal digits");
    let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
    let r = BigRational::new(numer, denom);
    if negative {
        -r
    } else {
        r
    }
}
