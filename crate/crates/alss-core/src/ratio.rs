//! Exact rational fractions for channel arithmetic.
//!
//! The split and bottleneck coefficients are decimal fractions like 0.4 or
//! 0.7 whose products with channel counts must floor exactly (floor(0.7·10)
//! has to be 7, not 6 as binary `f64` would give). `Ratio` keeps numerator
//! and denominator as integers so `floor(r · c)` is pure integer math.

use std::fmt;
use std::str::FromStr;

use crate::error::CoreError;

/// Exact non-negative rational, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    num: u32,
    den: u32,
}

impl Ratio {
    pub fn new(num: u32, den: u32) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.max(1), den);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    /// floor(self · n) in exact integer arithmetic.
    pub fn floor_mul(&self, n: usize) -> usize {
        n * self.num as usize / self.den as usize
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Strictly inside (0, 1)?
    pub fn is_proper_fraction(&self) -> bool {
        self.num > 0 && self.num < self.den
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Prefer the short decimal form when the denominator divides a
        // power of ten (covers every schedule value), else "num/den".
        let mut den = self.den;
        let mut digits = 0u32;
        while den % 2 == 0 {
            den /= 2;
            digits += 1;
        }
        let mut five_digits = 0u32;
        while den % 5 == 0 {
            den /= 5;
            five_digits += 1;
        }
        if den == 1 {
            let digits = digits.max(five_digits);
            let scaled = self.num as u64 * 10u64.pow(digits) / self.den as u64;
            if digits == 0 {
                return write!(f, "{scaled}");
            }
            let s = format!("{scaled:0width$}", width = digits as usize + 1);
            let (int, frac) = s.split_at(s.len() - digits as usize);
            return write!(f, "{int}.{frac}");
        }
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = CoreError;

    /// Accepts decimal literals ("0.4", "1", ".75") or "num/den".
    fn from_str(s: &str) -> Result<Self, CoreError> {
        let bad = || CoreError::invalid(format!("cannot parse ratio `{s}`"));
        if let Some((n, d)) = s.split_once('/') {
            let num: u32 = n.trim().parse().map_err(|_| bad())?;
            let den: u32 = d.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            return Ok(Ratio::new(num, den));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if frac_part.len() > 9 {
            return Err(CoreError::invalid(format!(
                "ratio `{s}` has too many digits"
            )));
        }
        let int: u32 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let frac: u32 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().map_err(|_| bad())?
        };
        let den = 10u32.pow(frac_part.len() as u32);
        Ok(Ratio::new(int * den + frac, den))
    }
}
