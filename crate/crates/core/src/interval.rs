//! Closed floating-point intervals with outward rounding.
//!
//! Endpoints of `+ - * /` and `sqrt` are rounded outward only when the
//! floating-point result is inexact, using error-free transformations.
//! Transcendental functions are widened by a few ulps.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::{Error, Result};

const TRIG_SLACK: f64 = 4.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Builds `[lo, hi]`; the endpoints are swapped if given out of order.
    pub fn new(lo: f64, hi: f64) -> Self {
        if lo <= hi {
            Self { lo, hi }
        } else {
            Self { lo: hi, hi: lo }
        }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Intersection, or `None` when the intervals are disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn scale(self, k: f64) -> Interval {
        self * Interval::point(k)
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            -self
        } else {
            Interval {
                lo: 0.0,
                hi: (-self.lo).max(self.hi),
            }
        }
    }

    pub fn relu(self) -> Interval {
        Interval {
            lo: self.lo.max(0.0),
            hi: self.hi.max(0.0),
        }
    }

    pub fn div(self, rhs: Interval) -> Result<Interval> {
        if rhs.lo <= 0.0 && rhs.hi >= 0.0 {
            return Err(Error::Domain(format!(
                "divisor interval [{}, {}] contains zero",
                rhs.lo, rhs.hi
            )));
        }
        let pairs = [
            (self.lo, rhs.lo),
            (self.lo, rhs.hi),
            (self.hi, rhs.lo),
            (self.hi, rhs.hi),
        ];
        Ok(Interval {
            lo: pairs.iter().map(|&(a, b)| div_down(a, b)).fold(f64::INFINITY, f64::min),
            hi: pairs.iter().map(|&(a, b)| div_up(a, b)).fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn sqrt(self) -> Result<Interval> {
        if self.lo < 0.0 {
            return Err(Error::Domain(format!(
                "sqrt of interval [{}, {}] with negative part",
                self.lo, self.hi
            )));
        }
        Ok(Interval {
            lo: sqrt_down(self.lo),
            hi: sqrt_up(self.hi),
        })
    }

    pub fn powi(self, n: i32) -> Result<Interval> {
        if n == 0 {
            return Ok(Interval::point(1.0));
        }
        if n < 0 {
            let p = self.powi(-n)?;
            return Interval::point(1.0).div(p);
        }
        let n = n as u32;
        if n % 2 == 0 {
            let a = self.abs();
            Ok(Interval {
                lo: pow_down(a.lo, n).max(0.0),
                hi: pow_up(a.hi, n),
            })
        } else {
            Ok(Interval {
                lo: odd_pow_down(self.lo, n),
                hi: odd_pow_up(self.hi, n),
            })
        }
    }

    pub fn sin(self) -> Interval {
        use std::f64::consts::{FRAC_PI_2, PI};
        self.periodic_range(f64::sin, FRAC_PI_2, -FRAC_PI_2 + 2.0 * PI)
    }

    pub fn cos(self) -> Interval {
        use std::f64::consts::PI;
        self.periodic_range(f64::cos, 0.0, PI)
    }

    // Range of a 2π-periodic function with maxima at `peak + 2kπ` and
    // minima at `trough + 2kπ`.
    fn periodic_range(self, f: fn(f64) -> f64, peak: f64, trough: f64) -> Interval {
        use std::f64::consts::TAU;
        if !self.is_finite() || self.width() >= TAU {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let a = f(self.lo);
        let b = f(self.hi);
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        let hits = |c: f64| {
            // Inflate the window slightly so a critical point sitting on an
            // endpoint is never missed because of rounding in the reduction.
            let eps = 1e-12 * (1.0 + self.lo.abs().max(self.hi.abs()));
            let k = ((self.lo - eps - c) / TAU).ceil();
            c + k * TAU <= self.hi + eps
        };
        if hits(peak) {
            hi = 1.0;
        }
        if hits(trough) {
            lo = -1.0;
        }
        Interval {
            lo: (lo - TRIG_SLACK).max(-1.0),
            hi: (hi + TRIG_SLACK).min(1.0),
        }
    }
}

fn pow_down(a: f64, n: u32) -> f64 {
    (0..n).fold(1.0f64, |acc, _| mul_down(acc, a))
}

fn pow_up(a: f64, n: u32) -> f64 {
    (0..n).fold(1.0f64, |acc, _| mul_up(acc, a))
}

fn odd_pow_down(v: f64, n: u32) -> f64 {
    if v >= 0.0 {
        pow_down(v, n)
    } else {
        -pow_up(-v, n)
    }
}

fn odd_pow_up(v: f64, n: u32) -> f64 {
    if v >= 0.0 {
        pow_up(v, n)
    } else {
        -pow_down(-v, n)
    }
}

// Below this magnitude residuals may themselves be rounded, so results are
// widened unconditionally.
const TINY: f64 = 1e-290;

/// Exact rounding error of `a + b`: the true sum is `s + err`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn round_down(v: f64, err: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    if err < 0.0 || err.is_nan() || (v != 0.0 && v.abs() < TINY) {
        v.next_down()
    } else {
        v
    }
}

fn round_up(v: f64, err: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    if err > 0.0 || err.is_nan() || (v != 0.0 && v.abs() < TINY) {
        v.next_up()
    } else {
        v
    }
}

fn add_down(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    round_down(s, e)
}

fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    round_up(s, e)
}

fn mul_err(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    if p.is_nan() {
        // 0 * inf only arises from unbounded inputs; treat it as 0.
        return (0.0, 0.0);
    }
    (p, a.mul_add(b, -p))
}

fn mul_down(a: f64, b: f64) -> f64 {
    let (p, e) = mul_err(a, b);
    round_down(p, e)
}

fn mul_up(a: f64, b: f64) -> f64 {
    let (p, e) = mul_err(a, b);
    round_up(p, e)
}

/// `a / b` and the sign of `a/b - q`.
fn div_err(a: f64, b: f64) -> (f64, f64) {
    let q = a / b;
    let r = (-q).mul_add(b, a);
    (q, r * b.signum())
}

fn div_down(a: f64, b: f64) -> f64 {
    let (q, e) = div_err(a, b);
    round_down(q, e)
}

fn div_up(a: f64, b: f64) -> f64 {
    let (q, e) = div_err(a, b);
    round_up(q, e)
}

fn sqrt_down(v: f64) -> f64 {
    let s = v.sqrt();
    round_down(s, (-s).mul_add(s, v)).max(0.0)
}

fn sqrt_up(v: f64) -> f64 {
    let s = v.sqrt();
    round_up(s, (-s).mul_add(s, v))
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval {
            lo: add_down(self.lo, rhs.lo),
            hi: add_up(self.hi, rhs.hi),
        }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval {
            lo: add_down(self.lo, -rhs.hi),
            hi: add_up(self.hi, -rhs.lo),
        }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let pairs = [
            (self.lo, rhs.lo),
            (self.lo, rhs.hi),
            (self.hi, rhs.lo),
            (self.hi, rhs.hi),
        ];
        Interval {
            lo: pairs.iter().map(|&(a, b)| mul_down(a, b)).fold(f64::INFINITY, f64::min),
            hi: pairs.iter().map(|&(a, b)| mul_up(a, b)).fold(f64::NEG_INFINITY, f64::max),
        }
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

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_encloses_exact_results() {
        let a = Interval::new(0.0, 1.0);
        let b = Interval::new(-1.0, 1.0);
        let p = a * b;
        assert_eq!(p, Interval::new(-1.0, 1.0));
        let t = Interval::point(0.1) + Interval::point(0.2);
        assert!(t.lo < t.hi && t.contains(0.30000000000000004));
        assert_eq!(t.hi.next_down(), t.lo);
        let s = a + b;
        assert!(s.contains(-1.0) && s.contains(2.0));
    }

    #[test]
    fn even_power_of_straddling_interval_starts_at_zero() {
        let x = Interval::new(-2.0, 1.0).powi(2).unwrap();
        assert_eq!(x, Interval::new(0.0, 4.0));
        let c = Interval::new(-2.0, 1.0).powi(3).unwrap();
        assert!(c.lo <= -8.0 && c.hi >= 1.0);
    }

    #[test]
    fn division_by_interval_containing_zero_is_rejected() {
        assert!(Interval::point(1.0).div(Interval::new(-1.0, 1.0)).is_err());
        assert!(Interval::point(1.0).div(Interval::new(0.0, 1.0)).is_err());
        let q = Interval::point(1.0).div(Interval::new(2.0, 4.0)).unwrap();
        assert!(q.contains(0.25) && q.contains(0.5));
    }

    #[test]
    fn sum_of_squares_stays_nonnegative() {
        let x = Interval::new(-0.3, 0.7);
        let s = x.powi(2).unwrap() + x.powi(2).unwrap();
        assert!(s.lo >= 0.0);
        assert!(s.sqrt().is_ok());
    }

    #[test]
    fn inexact_operations_round_outward() {
        let third = Interval::point(1.0).div(Interval::point(3.0)).unwrap();
        assert!(third.lo < third.hi);
        let back = third * Interval::point(3.0);
        assert!(back.contains(1.0));
        let r = Interval::point(2.0).sqrt().unwrap();
        assert!(r.lo < r.hi && r.lo * r.lo <= 2.0);
    }

    #[test]
    fn sqrt_of_negative_part_is_rejected() {
        assert!(Interval::new(-1.0, 4.0).sqrt().is_err());
        let r = Interval::new(4.0, 9.0).sqrt().unwrap();
        assert!(r.contains(2.0) && r.contains(3.0));
    }

    #[test]
    fn trig_ranges_cover_interior_extrema() {
        let s = Interval::new(0.0, 3.0).sin();
        assert_eq!(s.hi, 1.0);
        assert!(s.lo <= 0.0);
        let c = Interval::new(1.0, 4.0).cos();
        assert_eq!(c.lo, -1.0);
        assert!(c.hi >= 1.0f64.cos());
        let narrow = Interval::new(0.1, 0.2).sin();
        assert!(narrow.contains(0.1f64.sin()) && narrow.contains(0.2f64.sin()));
        assert!(narrow.hi < 0.2);
    }

    #[test]
    fn sampled_trig_values_lie_inside() {
        let boxes = [(-7.0, -5.5), (-0.3, 0.4), (2.0, 5.0), (10.0, 10.5)];
        for (lo, hi) in boxes {
            let iv = Interval::new(lo, hi);
            let (s, c) = (iv.sin(), iv.cos());
            for k in 0..=200 {
                let t = lo + (hi - lo) * k as f64 / 200.0;
                assert!(s.contains(t.sin()), "sin({t}) outside {s}");
                assert!(c.contains(t.cos()), "cos({t}) outside {c}");
            }
        }
    }
}
