//! Numeric abstraction shared by the trajectory constructions.
//!
//! Turning points are built either in `f64` (the simulation path) or in exact
//! rationals (`BigRational`), which lets closed forms and step-by-step
//! geometry be compared without rounding at large magnitudes.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// A real-number-like field element.
pub trait Scalar: Clone + PartialOrd + Debug + Num + Signed + FromPrimitive + ToPrimitive {
    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("integer conversion") / Self::from_i64(den).expect("integer conversion")
    }

    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {}

impl Scalar for BigRational {}

/// Exact rational from a decimal literal such as `"0.228652"` or `"1/3"`.
pub fn rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d == BigInt::from(0) {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut num: BigInt = digits.parse().ok()?;
    if negative {
        num = -num;
    }
    let den = BigInt::from(10u8).pow(frac_part.len() as u32);
    Some(BigRational::new(num, den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(rational("1/3").unwrap(), BigRational::new(1.into(), 3.into()));
        assert_eq!(
            rational("0.228652").unwrap(),
            BigRational::new(228652.into(), 1_000_000.into())
        );
        assert_eq!(rational("-2.5").unwrap(), BigRational::new((-5).into(), 2.into()));
        assert!(rational("1/0").is_none());
        assert!(rational("abc").is_none());
    }

    #[test]
    fn from_ratio_is_exact_for_rationals() {
        let third = <BigRational as Scalar>::from_ratio(1, 3);
        assert_eq!(
            third.clone() * BigRational::from_i64(3).unwrap(),
            BigRational::from_i64(1).unwrap()
        );
        assert!((third.approx() - 1.0 / 3.0).abs() < 1e-16);
    }
}
