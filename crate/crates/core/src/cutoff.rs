//! Exact decimal fractions for the alignment and frequency cut-offs.
//!
//! Thresholds such as `0.7 * 10` must compare exactly against integer scores,
//! so cut-offs are kept as `numerator / 10^k` and every gate is evaluated in
//! integer arithmetic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cutoff {
    num: u64,
    scale: u32,
}

impl Cutoff {
    pub const ZERO: Cutoff = Cutoff { num: 0, scale: 0 };
    pub const ONE: Cutoff = Cutoff { num: 1, scale: 0 };

    fn den(self) -> u128 {
        10u128.pow(self.scale)
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den() as f64
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    /// `value >= self * reference`, exactly.
    pub fn admits(self, value: i64, reference: i64) -> bool {
        (value as i128) * (self.den() as i128) >= (self.num as i128) * (reference as i128)
    }

    /// Same as [`Cutoff::admits`] for unsigned counts.
    pub fn admits_count(self, value: u64, reference: u64) -> bool {
        (value as u128) * self.den() >= (self.num as u128) * (reference as u128)
    }

    /// Smallest integer that reaches `self * reference`.
    pub fn threshold_ceil(self, reference: i64) -> i64 {
        let den = self.den() as i128;
        let prod = self.num as i128 * reference as i128;
        (prod.div_euclid(den) + i128::from(prod.rem_euclid(den) != 0)) as i64
    }
}

impl FromStr for Cutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Config(format!("'{s}' is not a non-negative decimal"));
        let s = s.trim();
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if (int.is_empty() && frac.is_empty())
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 12
        {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        let digits = format!("{int}{frac}");
        let num: u64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
        Ok(Cutoff { num, scale: frac.len() as u32 })
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 0 {
            return write!(f, "{}", self.num);
        }
        let den = self.den() as u64;
        write!(
            f,
            "{}.{:0width$}",
            self.num / den,
            self.num % den,
            width = self.scale as usize
        )
    }
}

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
