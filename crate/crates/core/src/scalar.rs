//! Scalar field abstraction shared by exact and floating-point code paths.

use std::fmt::{Debug, Display};
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Exact rational scalar.
pub type Rational = BigRational;

/// Builds the rational `n / d`.
///
/// # Panics
/// Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Field of scalars used for algebra coordinates.
///
/// Two implementations exist: [`Rational`] (exact) and `f64`. The scalar type is
/// a type parameter everywhere, so exact and float values can never be mixed.
pub trait Scalar:
    Num + Neg<Output = Self> + Clone + Debug + Display + PartialOrd + Send + Sync + 'static
{
    /// `true` for exact arithmetic.
    const EXACT: bool;

    /// Converts an exact rational into this scalar type.
    fn from_rational(r: &Rational) -> Self;

    /// Picks the exact or the cached float form of a constant.
    fn from_parts(exact: &Rational, approx: f64) -> Self;

    fn from_i64(n: i64) -> Self;

    fn to_f64(&self) -> f64;

    /// Whether `self` is zero, exactly or relative to `scale` in float mode.
    fn is_negligible(&self, scale: f64) -> bool;

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    /// Integer power.
    fn powi(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = acc * self.clone();
        }
        acc
    }
}

/// Relative tolerance used for float zero tests.
pub const FLOAT_EPS: f64 = 1e-12;

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn from_parts(_exact: &Rational, approx: f64) -> Self {
        approx
    }

    fn from_i64(n: i64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_negligible(&self, scale: f64) -> bool {
        self.abs() <= FLOAT_EPS * scale.max(1.0)
    }

    fn powi(&self, e: u32) -> Self {
        f64::powi(*self, e as i32)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn from_parts(exact: &Rational, _approx: f64) -> Self {
        exact.clone()
    }

    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_negligible(&self, _scale: f64) -> bool {
        self.is_zero()
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn powi(&self, e: u32) -> Self {
        num_traits::pow::Pow::pow(self, e)
    }
}

/// Converts a float to the nearest rational representation (exact binary value).
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    BigRational::from_f64(x)
}

/// Parses `a`, `a/b` or a decimal literal into a rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Ok(n) = s.parse::<BigInt>() {
        return Some(BigRational::from_integer(n));
    }
    // decimal literal like -1.25 or 3e-2
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(p) => (&s[..p], s[p + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let num: BigInt = digits.parse().ok()?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let mut r = BigRational::from_integer(num);
    if scale >= 0 {
        r *= num_traits::pow::Pow::pow(&ten, scale as u32);
    } else {
        r /= num_traits::pow::Pow::pow(&ten, (-scale) as u32);
    }
    Some(if neg { -r } else { r })
}

/// Euclidean length of an f64 slice.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
