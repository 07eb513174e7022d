//! Closed real intervals and the natural interval extensions of the
//! elementary functions used by the expression trees.
//!
//! Arithmetic is plain round-to-nearest `f64`; callers that need a safety
//! margin add it at the decision point (see the verifier's certification
//! threshold).

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };

    /// Builds `[lo, hi]`; the bounds must be ordered.
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan(), "[{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    /// Symmetric interval `[-r, r]`.
    pub fn symmetric(r: f64) -> Self {
        Interval { lo: -r, hi: r }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest absolute value in the interval.
    pub fn mig(&self) -> f64 {
        if self.contains(0.0) {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Intersection, or `None` when the intervals are disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Intersection that keeps `self` if the two are (numerically) disjoint.
    pub fn clip(&self, other: &Interval) -> Interval {
        self.intersect(other).unwrap_or(*self)
    }

    pub fn scale(&self, k: f64) -> Interval {
        if k >= 0.0 {
            Interval::new(self.lo * k, self.hi * k)
        } else {
            Interval::new(self.hi * k, self.lo * k)
        }
    }

    pub fn recip(&self) -> Option<Interval> {
        if self.contains(0.0) {
            return None;
        }
        Some(Interval::new(1.0 / self.hi, 1.0 / self.lo))
    }

    pub fn div(&self, rhs: &Interval) -> Option<Interval> {
        rhs.recip().map(|r| *self * r)
    }

    pub fn sqr(&self) -> Interval {
        let (a, b) = (self.lo * self.lo, self.hi * self.hi);
        if self.contains(0.0) {
            Interval::new(0.0, a.max(b))
        } else {
            Interval::new(a.min(b), a.max(b))
        }
    }

    /// Integer power. Negative exponents require `0 ∉ self`.
    pub fn powi(&self, k: i32) -> Option<Interval> {
        match k {
            0 => Some(Interval::point(1.0)),
            1 => Some(*self),
            k if k < 0 => self.powi(-k)?.recip(),
            k if k % 2 == 0 => {
                let m = self.mig().powi(k);
                let big = self.mag().powi(k);
                Some(Interval::new(m, big))
            }
            k => Some(Interval::new(self.lo.powi(k), self.hi.powi(k))),
        }
    }

    /// Real power with a non-integer exponent; requires `self ≥ 0` (and
    /// `self > 0` for negative exponents).
    pub fn powf(&self, p: f64) -> Option<Interval> {
        if self.lo < 0.0 || (p < 0.0 && self.lo <= 0.0) {
            return None;
        }
        let (a, b) = (self.lo.powf(p), self.hi.powf(p));
        Some(if p >= 0.0 {
            Interval::new(a, b)
        } else {
            Interval::new(b, a)
        })
    }

    pub fn sqrt(&self) -> Option<Interval> {
        (self.lo >= 0.0).then(|| Interval::new(self.lo.sqrt(), self.hi.sqrt()))
    }

    pub fn cbrt(&self) -> Interval {
        Interval::new(self.lo.cbrt(), self.hi.cbrt())
    }

    pub fn exp(&self) -> Interval {
        Interval::new(self.lo.exp(), self.hi.exp())
    }

    pub fn sin(&self) -> Interval {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.sin(), self.hi.sin());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        if contains_periodic(self, FRAC_PI_2) {
            hi = 1.0;
        }
        if contains_periodic(self, -FRAC_PI_2) {
            lo = -1.0;
        }
        Interval::new(lo, hi)
    }

    pub fn cos(&self) -> Interval {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.cos(), self.hi.cos());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        if contains_periodic(self, 0.0) {
            hi = 1.0;
        }
        if contains_periodic(self, PI) {
            lo = -1.0;
        }
        Interval::new(lo, hi)
    }

    pub fn abs(&self) -> Interval {
        Interval::new(self.mig(), self.mag())
    }
}

/// Whether `[lo, hi]` contains `phase + 2kπ` for some integer `k`.
fn contains_periodic(iv: &Interval, phase: f64) -> bool {
    let k = ((iv.lo - phase) / TAU).ceil();
    let p = phase + k * TAU;
    // `ceil` may land one period late when `lo - phase` is a multiple of 2π
    // up to rounding.
    (p - TAU >= iv.lo && p - TAU <= iv.hi) || p <= iv.hi
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::new(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Add<f64> for Interval {
    type Output = Interval;
    fn add(self, rhs: f64) -> Interval {
        Interval::new(self.lo + rhs, self.hi + rhs)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::new(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        if self.is_point() {
            return rhs.scale(self.lo);
        }
        if rhs.is_point() {
            return self.scale(rhs.lo);
        }
        let c = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, rhs: f64) -> Interval {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_contains(iv: Interval, f: impl Fn(f64) -> f64, dom: Interval) {
        for k in 0..=1000 {
            let x = dom.lo + dom.width() * k as f64 / 1000.0;
            let y = f(x);
            assert!(
                iv.lo - 1e-12 <= y && y <= iv.hi + 1e-12,
                "{y} not in {iv} at x={x}"
            );
        }
    }

    #[test]
    fn trig_ranges() {
        let d = Interval::new(-0.3, 2.0);
        assert_eq!(d.sin().hi, 1.0);
        sample_contains(d.sin(), f64::sin, d);
        sample_contains(d.cos(), f64::cos, d);
        let d = Interval::new(3.0, 3.5);
        assert_eq!(d.cos().lo, -1.0);
        let d = Interval::new(-FRAC_PI_2, FRAC_PI_2);
        assert_eq!(d.sin(), Interval::new(-1.0, 1.0));
        assert_eq!(Interval::new(0.0, 7.0).cos(), Interval::new(-1.0, 1.0));
    }

    #[test]
    fn even_powers_are_nonnegative() {
        let d = Interval::new(-1.0, 0.5);
        assert_eq!(d.powi(2).unwrap(), Interval::new(0.0, 1.0));
        assert_eq!(d.sqr(), Interval::new(0.0, 1.0));
        assert_eq!(d.powi(3).unwrap(), Interval::new(-1.0, 0.125));
        assert!(d.powi(-1).is_none());
    }

    #[test]
    fn fractional_power_domain() {
        assert!(Interval::new(-0.1, 1.0).powf(0.5).is_none());
        assert!(Interval::new(0.0, 1.0).powf(-0.5).is_none());
        let r = Interval::new(0.25, 4.0).powf(-0.5).unwrap();
        assert_eq!(r, Interval::new(0.5, 2.0));
    }

    #[test]
    fn division_by_interval_containing_zero() {
        assert!(Interval::point(1.0).div(&Interval::new(-1.0, 1.0)).is_none());
        let q = Interval::new(1.0, 2.0).div(&Interval::new(2.0, 4.0)).unwrap();
        assert_eq!(q, Interval::new(0.25, 1.0));
    }
}
