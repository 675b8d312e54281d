//! Exact packet weights.
//!
//! Every comparison the verifiers make between weights is exact, so weights
//! are rationals rather than floats. Text input accepts integers, decimals and
//! `num/den` fractions; text output is always canonical (`7`, `3/4`).

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact rational number used for weights, totals and ratios.
pub type Rational = Ratio<i128>;

/// A packet weight (or a sum of weights).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(pub Rational);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid weight literal `{0}`")]
pub struct ParseWeightError(pub String);

impl Weight {
    pub const ZERO: Weight = Weight(Ratio::new_raw(0, 1));

    pub fn integer(v: i128) -> Self {
        Weight(Ratio::from_integer(v))
    }

    /// `num/den`, reduced. Panics if `den == 0`.
    pub fn ratio(num: i128, den: i128) -> Self {
        Weight(Ratio::new(num, den))
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn as_rational(&self) -> Rational {
        self.0
    }

    /// Lossy, for display and aggregate statistics only.
    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

/// Exact `num / den`, or `None` when `den` is zero.
pub fn exact_ratio(num: Weight, den: Weight) -> Option<Rational> {
    if den.is_zero() {
        None
    } else {
        Some(num.0 / den.0)
    }
}

/// Always `num/den`, also for integers. Used by reports.
pub fn fmt_fraction(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: i128 = n.trim().parse().ok()?;
        let d: i128 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Ratio::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let negative = int.starts_with('-');
        let digits = int.trim_start_matches(['-', '+']);
        if frac.is_empty() && digits.is_empty() {
            return None;
        }
        if !digits.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        if frac.len() > 30 {
            return None;
        }
        let whole: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
        let scale = 10i128.checked_pow(frac.len() as u32)?;
        let frac_val: i128 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        let mag = whole.checked_mul(scale)?.checked_add(frac_val)?;
        let num = if negative { -mag } else { mag };
        return Some(Ratio::new(num, scale));
    }
    s.parse::<i128>().ok().map(Ratio::from_integer)
}

impl FromStr for Weight {
    type Err = ParseWeightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_rational(s)
            .map(Weight)
            .ok_or_else(|| ParseWeightError(s.to_string()))
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<i128> for Weight {
    fn from(v: i128) -> Self {
        Weight::integer(v)
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        Weight(self.0 + rhs.0)
    }
}

impl AddAssign for Weight {
    fn add_assign(&mut self, rhs: Weight) {
        self.0 += rhs.0;
    }
}

impl Sub for Weight {
    type Output = Weight;
    fn sub(self, rhs: Weight) -> Weight {
        Weight(self.0 - rhs.0)
    }
}

impl Mul<i128> for Weight {
    type Output = Weight;
    fn mul(self, rhs: i128) -> Weight {
        Weight(self.0 * rhs)
    }
}

impl Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        iter.fold(Weight::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Weight> for Weight {
    fn sum<I: Iterator<Item = &'a Weight>>(iter: I) -> Weight {
        iter.copied().sum()
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_fraction(&self.0))
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
