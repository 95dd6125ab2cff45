//! Extended-precision building blocks: Neumaier compensated summation and a
//! minimal double-double type.
//!
//! Only the operations the orbit integrators need are provided. Division and
//! the logarithm are accurate to roughly 2^-104 relative; nothing here tries to
//! be a general-purpose multiprecision library.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::Serialize;

/// Knuth's TwoSum: `s + e == a + b` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    let e = (a - (s - v)) + (b - v);
    (s, e)
}

/// TwoSum for `|a| >= |b|`.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// `p + e == a * b` exactly (FMA based).
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

/// Neumaier's improved Kahan summation.
///
/// Terms are added in the order they arrive; the running compensation is
/// folded in only when the value is read.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    pub const fn from_value(x: f64) -> Self {
        Self { sum: x, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// The exact pair value as a normalized double-double.
    #[inline]
    pub fn to_dd(self) -> DoubleDouble {
        let (hi, lo) = two_sum(self.sum, self.comp);
        DoubleDouble { hi, lo }
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

/// ln 2 to double-double precision.
pub const LN_2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    #[inline]
    pub const fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// Builds a normalized value from an arbitrary pair.
    #[inline]
    pub fn from_pair(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, b);
        Self { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Self { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Self { hi, lo }
    }

    #[inline]
    pub fn div_f64(self, b: f64) -> Self {
        let q1 = self.hi / b;
        // remainder self - q1*b, computed exactly up to the lo term
        let (p, e) = two_prod(q1, b);
        let (s, f) = two_sum(self.hi, -p);
        let r = (s + (f - e)) + self.lo;
        let q2 = r / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo }
    }

    pub fn recip(self) -> Self {
        Self::ONE / self
    }

    pub fn floor(self) -> Self {
        let fh = self.hi.floor();
        if fh == self.hi {
            // hi is integral: the floor depends on lo
            let (hi, lo) = quick_two_sum(fh, self.lo.floor());
            Self { hi, lo }
        } else {
            Self { hi: fh, lo: 0.0 }
        }
    }

    /// Fractional part in `[0, 1)`, rounded to f64.
    pub fn fract_f64(self) -> f64 {
        let f = (self - self.floor()).to_f64();
        if f >= 1.0 {
            f64::from_bits(1.0f64.to_bits() - 1)
        } else {
            f.max(0.0)
        }
    }

    /// Natural logarithm for positive finite arguments, NaN otherwise.
    ///
    /// Reduces by a power of two, then sums the atanh series
    /// `ln r = 2 * sum t^(2j+1)/(2j+1)` with `t = (r-1)/(r+1)`, `|t| < 0.18`.
    pub fn ln(self) -> Self {
        if !(self.hi > 0.0) || !self.is_finite() {
            return Self {
                hi: f64::NAN,
                lo: f64::NAN,
            };
        }
        let mut k = self.hi.log2().round() as i32;
        let mut r = self.scale_pow2(-k);
        // keep r within [~0.7, ~1.42] even when log2 rounds the wrong way
        if r.hi > std::f64::consts::SQRT_2 {
            r = r.scale_pow2(-1);
            k += 1;
        } else if r.hi < std::f64::consts::FRAC_1_SQRT_2 {
            r = r.scale_pow2(1);
            k -= 1;
        }
        let t = (r - Self::ONE) / (r + Self::ONE);
        let t2 = t * t;
        let mut term = t;
        let mut acc = t;
        let mut j = 1u32;
        loop {
            term = term * t2;
            let contrib = term.div_f64(f64::from(2 * j + 1));
            acc += contrib;
            if contrib.hi.abs() < 1e-34 * acc.hi.abs().max(1e-300) || j > 200 {
                break;
            }
            j += 1;
        }
        LN_2.mul_f64(f64::from(k)) + acc.mul_f64(2.0)
    }

    #[inline]
    fn scale_pow2(self, e: i32) -> Self {
        let f = 2f64.powi(e);
        Self {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl AddAssign for DoubleDouble {
    #[inline]
    fn add_assign(&mut self, b: Self) {
        *self = *self + b;
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo }.add_f64(q3)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} + {:e}", self.hi, self.lo)
    }
}
