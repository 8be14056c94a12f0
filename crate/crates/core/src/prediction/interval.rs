//! Closed intervals with outward rounding.
//!
//! Every operation widens its result by one ulp on each side, so an interval
//! computed here always contains the exact real result of the same operation
//! on any points of the operands.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

fn down(x: f64) -> f64 {
    if x.is_finite() {
        x.next_down()
    } else {
        x
    }
}

fn up(x: f64) -> f64 {
    if x.is_finite() {
        x.next_up()
    } else {
        x
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// `center +- half_width`, rounded outward.
    pub fn around(center: f64, half_width: f64) -> Self {
        Self {
            lo: down(center - half_width),
            hi: up(center + half_width),
        }
    }

    fn outward(lo: f64, hi: f64) -> Self {
        Self { lo: down(lo), hi: up(hi) }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Self {
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// `[0, 1] * self`, i.e. the hull of zero and the interval.
    pub fn with_zero(&self) -> Self {
        Self {
            lo: self.lo.min(0.0),
            hi: self.hi.max(0.0),
        }
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        Self {
            lo: self.lo.clamp(lo, hi),
            hi: self.hi.clamp(lo, hi),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        let (a, b) = (self.lo * k, self.hi * k);
        Self::outward(a.min(b), a.max(b))
    }

    /// Cosine over the interval, exact extrema plus outward rounding.
    pub fn cos(&self) -> Self {
        if self.width() >= 2.0 * PI {
            return Self::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.cos(), self.hi.cos());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        // Maxima at 2k pi, minima at (2k + 1) pi.
        let k0 = (self.lo / PI).ceil() as i64;
        let k1 = (self.hi / PI).floor() as i64;
        for k in k0..=k1 {
            if k.rem_euclid(2) == 0 {
                hi = 1.0;
            } else {
                lo = -1.0;
            }
        }
        Self::outward(lo.max(-1.0), hi.min(1.0)).clamp(-1.0, 1.0)
    }

    pub fn sin(&self) -> Self {
        (*self - Interval::point(FRAC_PI_2)).cos()
    }

    /// Tangent; the interval must lie strictly inside `(-pi/2, pi/2)`.
    pub fn tan(&self) -> Self {
        assert!(
            self.lo > -FRAC_PI_2 && self.hi < FRAC_PI_2,
            "tan outside its principal branch: {self}"
        );
        Self::outward(self.lo.tan(), self.hi.tan())
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::outward(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::outward(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let p = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::outward(lo, hi)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, k: f64) -> Interval {
        self.scale(k)
    }
}
