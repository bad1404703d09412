//! Exact ratios for parameters that must survive a round trip through the
//! container header bit-for-bit (the mismatch factor and geometric ratios).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    num: u32,
    den: u32,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rational {
    pub const ONE: Rational = Rational { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num == 0 {
            return Err(Error::InvalidRational(format!("{num}/{den}")));
        }
        let g = gcd(num as u64, den as u64) as u32;
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn recip(&self) -> Self {
        Self {
            num: self.den,
            den: self.num,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `(num/den)^2`, from the exact integer squares.
    pub fn squared_f64(&self) -> f64 {
        let n = self.num as u128 * self.num as u128;
        let d = self.den as u128 * self.den as u128;
        n as f64 / d as f64
    }

    pub fn ln(&self) -> f64 {
        (self.num as f64).ln() - (self.den as f64).ln()
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }

    /// Last continued-fraction convergent of `x` whose denominator stays
    /// within `max_den`.
    pub fn approximate(x: f64, max_den: u32) -> Result<Self> {
        if !(x.is_finite() && x > 0.0) || max_den == 0 {
            return Err(Error::InvalidRational(x.to_string()));
        }
        let limit = u32::MAX as u64;
        let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
        let mut rest = x;
        for _ in 0..64 {
            let a = rest.floor();
            if a > limit as f64 {
                break;
            }
            let a = a as u64;
            let p2 = a.saturating_mul(p1).saturating_add(p0);
            let q2 = a.saturating_mul(q1).saturating_add(q0);
            if p2 > limit || q2 > max_den as u64 {
                break;
            }
            (p0, q0, p1, q1) = (p1, q1, p2, q2);
            let frac = rest - a as f64;
            if frac < 1e-15 {
                break;
            }
            rest = 1.0 / frac;
        }
        if p1 == 0 || q1 == 0 {
            return Err(Error::InvalidRational(x.to_string()));
        }
        Rational::new(p1 as u32, q1 as u32)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Accepts `a/b`, integers, and decimals (`0.3` parses as exactly `3/10`).
impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidRational(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u32 = n.trim().parse().map_err(|_| bad())?;
            let d: u32 = d.trim().parse().map_err(|_| bad())?;
            return Rational::new(n, d);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 9 {
                return Err(bad());
            }
            let int: u64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| bad())?
            };
            let scale = 10u64.pow(frac.len() as u32);
            let frac: u64 = frac.parse().map_err(|_| bad())?;
            let num = int
                .checked_mul(scale)
                .and_then(|v| v.checked_add(frac))
                .ok_or_else(bad)?;
            let g = gcd(num, scale);
            let (num, den) = (num / g, scale / g);
            if num > u32::MAX as u64 || den > u32::MAX as u64 {
                return Err(bad());
            }
            return Rational::new(num as u32, den as u32);
        }
        let n: u32 = s.parse().map_err(|_| bad())?;
        Rational::new(n, 1)
    }
}
