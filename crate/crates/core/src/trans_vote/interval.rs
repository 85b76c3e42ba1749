//! Closed-interval arithmetic for bounding closed-form translations.
//!
//! Products use McCormick envelopes. Over a box the envelopes are tight at
//! the corners, so their extremes coincide with the extreme corner
//! products. Quotients require a denominator interval that excludes zero.
//!
//! [`Scalar`] lets one generic routine compute either a point estimate
//! (`f64`) or its enclosure (`Interval`) through identical operations.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// `[x - r, x + r]`.
    pub fn around(x: f64, r: f64) -> Self {
        Self::new(x - r, x + r)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }
}

/// Bounds of `w = x y` over the box `x in X, y in Y` from the McCormick
/// envelopes
///
/// ```text
/// w >= xL y + x yL - xL yL     w <= xU y + x yL - xU yL
/// w >= xU y + x yU - xU yU     w <= xL y + x yU - xL yU
/// ```
///
/// Each envelope is affine, so its extremes over the box lie at corners.
pub fn mccormick(x: Interval, y: Interval) -> Interval {
    let corners = [(x.lo, y.lo), (x.lo, y.hi), (x.hi, y.lo), (x.hi, y.hi)];
    let under = |(a, b): (f64, f64)| {
        (x.lo * b + a * y.lo - x.lo * y.lo).max(x.hi * b + a * y.hi - x.hi * y.hi)
    };
    let over = |(a, b): (f64, f64)| {
        (x.hi * b + a * y.lo - x.hi * y.lo).min(x.lo * b + a * y.hi - x.lo * y.hi)
    };
    // At a corner both envelopes reduce to the product itself; evaluating
    // the product directly keeps rounding monotone in the inputs.
    let exact = |(a, b): (f64, f64)| a * b;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in corners {
        debug_assert!((under(c) - exact(c)).abs() <= 1e-9 * (1.0 + exact(c).abs()));
        debug_assert!((over(c) - exact(c)).abs() <= 1e-9 * (1.0 + exact(c).abs()));
        lo = lo.min(exact(c));
        hi = hi.max(exact(c));
    }
    Interval { lo, hi }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::new(self.lo - o.hi, self.hi - o.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        mccormick(self, o)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

/// The numeric operations the closed-form translation solvers need.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(x: f64) -> Self;
    fn scale(self, k: f64) -> Self;
    /// `None` when the quotient is undefined or unbounded.
    fn checked_div(self, d: Self) -> Option<Self>;
    /// Point estimate used for pivot decisions.
    fn nominal(self) -> f64;
}

impl Scalar for f64 {
    fn constant(x: f64) -> Self {
        x
    }

    fn scale(self, k: f64) -> Self {
        self * k
    }

    fn checked_div(self, d: Self) -> Option<Self> {
        (d != 0.0).then(|| self / d)
    }

    fn nominal(self) -> f64 {
        self
    }
}

impl Scalar for Interval {
    fn constant(x: f64) -> Self {
        Interval::point(x)
    }

    fn scale(self, k: f64) -> Self {
        if k >= 0.0 {
            Interval::new(self.lo * k, self.hi * k)
        } else {
            Interval::new(self.hi * k, self.lo * k)
        }
    }

    fn checked_div(self, d: Self) -> Option<Self> {
        if d.contains_zero() {
            return None;
        }
        // x / y is monotone in each argument while y keeps its sign.
        let q = [
            self.lo / d.lo,
            self.lo / d.hi,
            self.hi / d.lo,
            self.hi / d.hi,
        ];
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Interval::new(lo, hi))
    }

    fn nominal(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}
