//! Scalar abstraction for the loss formulas, with a forward-mode dual
//! number so every loss gradient comes from the same code path that
//! computes the value.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic the IoU-family losses need. Implemented for `f32`, `f64`
/// and [`Dual4`]; writing the losses against this trait gives exact
/// machine-precision gradients for free.
pub trait Real:
    Copy
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// The primal value (for duals: the value part).
    fn value(self) -> f64;
    fn abs(self) -> Self;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn asin(self) -> Self;
    fn sin(self) -> Self;
    fn atan(self) -> Self;
    /// Power with a plain-real exponent.
    fn powf(self, p: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

macro_rules! impl_real_float {
    ($t:ty) => {
        impl Real for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn value(self) -> f64 {
                self as f64
            }
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            fn max(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            fn min(self, other: Self) -> Self {
                <$t>::min(self, other)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn asin(self) -> Self {
                <$t>::asin(self)
            }
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            fn atan(self) -> Self {
                <$t>::atan(self)
            }
            fn powf(self, p: f64) -> Self {
                <$t>::powf(self, p as $t)
            }
        }
    };
}

impl_real_float!(f32);
impl_real_float!(f64);

/// Forward-mode dual number carrying a 4-component tangent, one slot per
/// box coordinate (cx, cy, w, h).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual4 {
    pub v: f64,
    pub d: [f64; 4],
}

impl Dual4 {
    pub fn constant(v: f64) -> Self {
        Dual4 { v, d: [0.0; 4] }
    }

    /// A seeded variable: ∂self/∂slot = 1.
    pub fn var(v: f64, slot: usize) -> Self {
        let mut d = [0.0; 4];
        d[slot] = 1.0;
        Dual4 { v, d }
    }

    pub fn grad(&self) -> [f64; 4] {
        self.d
    }

    fn lift(self, v: f64, dv: f64) -> Self {
        Dual4 {
            v,
            d: [
                self.d[0] * dv,
                self.d[1] * dv,
                self.d[2] * dv,
                self.d[3] * dv,
            ],
        }
    }
}

impl PartialOrd for Dual4 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

impl Add for Dual4 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual4 {
            v: self.v + o.v,
            d: [
                self.d[0] + o.d[0],
                self.d[1] + o.d[1],
                self.d[2] + o.d[2],
                self.d[3] + o.d[3],
            ],
        }
    }
}

impl Sub for Dual4 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual4 {
            v: self.v - o.v,
            d: [
                self.d[0] - o.d[0],
                self.d[1] - o.d[1],
                self.d[2] - o.d[2],
                self.d[3] - o.d[3],
            ],
        }
    }
}

impl Mul for Dual4 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual4 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + o.d[0] * self.v,
                self.d[1] * o.v + o.d[1] * self.v,
                self.d[2] * o.v + o.d[2] * self.v,
                self.d[3] * o.v + o.d[3] * self.v,
            ],
        }
    }
}

impl Div for Dual4 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        Dual4 {
            v,
            d: [
                (self.d[0] - v * o.d[0]) * inv,
                (self.d[1] - v * o.d[1]) * inv,
                (self.d[2] - v * o.d[2]) * inv,
                (self.d[3] - v * o.d[3]) * inv,
            ],
        }
    }
}

impl Neg for Dual4 {
    type Output = Self;
    fn neg(self) -> Self {
        Dual4 {
            v: -self.v,
            d: [-self.d[0], -self.d[1], -self.d[2], -self.d[3]],
        }
    }
}

impl Real for Dual4 {
    fn from_f64(v: f64) -> Self {
        Dual4::constant(v)
    }

    fn value(self) -> f64 {
        self.v
    }

    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }

    fn max(self, other: Self) -> Self {
        if self.v >= other.v {
            self
        } else {
            other
        }
    }

    fn min(self, other: Self) -> Self {
        if self.v <= other.v {
            self
        } else {
            other
        }
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.lift(s, 0.5 / s)
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.lift(e, e)
    }

    fn asin(self) -> Self {
        self.lift(self.v.asin(), 1.0 / (1.0 - self.v * self.v).sqrt())
    }

    fn sin(self) -> Self {
        self.lift(self.v.sin(), self.v.cos())
    }

    fn atan(self) -> Self {
        self.lift(self.v.atan(), 1.0 / (1.0 + self.v * self.v))
    }

    fn powf(self, p: f64) -> Self {
        self.lift(self.v.powf(p), p * self.v.powf(p - 1.0))
    }
}
