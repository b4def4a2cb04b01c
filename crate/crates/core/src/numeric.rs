//! Small numerical building blocks: compensated sums, double-double
//! accumulation, log-factorials and adaptive Simpson quadrature.

use crate::error::{Error, Result};

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let s = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - s) + x;
        } else {
            self.carry += (x - s) + self.sum;
        }
        self.sum = s;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(iter);
    acc.value()
}

/// Unevaluated sum `hi + lo` carrying roughly 106 bits of precision.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = two_sum(s, e);
        Self { hi, lo }
    }

    pub fn add_f64(self, x: f64) -> Self {
        self.add(Self::from_f64(x))
    }

    pub fn mul_f64(self, x: f64) -> Self {
        let (p, e) = two_prod(self.hi, x);
        let e = e + self.lo * x;
        let (hi, lo) = two_sum(p, e);
        Self { hi, lo }
    }

    pub fn mul(self, other: Self) -> Self {
        self.mul_f64(other.hi).add(self.mul_f64(other.lo))
    }

    pub fn div_f64(self, x: f64) -> Self {
        let q1 = self.hi / x;
        // remainder self - q1*x, computed exactly enough for one correction
        let (p, e) = two_prod(q1, x);
        let r = (self.hi - p - e + self.lo) / x;
        let (hi, lo) = two_sum(q1, r);
        Self { hi, lo }
    }

    pub fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// `x^n` for a nonnegative integer exponent that may exceed `i32`.
pub fn powi_u64(x: f64, n: u64) -> f64 {
    match i32::try_from(n) {
        Ok(k) => x.powi(k),
        Err(_) => x.powf(n as f64),
    }
}

/// `(-1)^n`.
#[inline]
pub fn alternating_sign(n: u64) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

const SMALL_LN_FACT: usize = 32;

/// `ln(n!)`. Exact products below 32, Stirling series above.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < SMALL_LN_FACT {
        let mut p = 1.0f64;
        for j in 2..=n {
            p *= j as f64;
        }
        return p.ln();
    }
    let x = n as f64 + 1.0;
    let x2 = x * x;
    let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2)
        - 1.0 / (1680.0 * x * x2 * x2 * x2);
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `C(n, k)` as a float, by the multiplicative recurrence (exact for small n).
pub fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    if n > 1000 {
        return ln_choose(n, k).exp();
    }
    let mut c = 1.0f64;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c.round_if_integral()
}

trait RoundIfIntegral {
    fn round_if_integral(self) -> Self;
}

impl RoundIfIntegral for f64 {
    fn round_if_integral(self) -> Self {
        // products of integers stay integers; undo the last-ulp drift
        if self < 9.0e15 {
            self.round()
        } else {
            self
        }
    }
}

/// Ceiling that treats values within a few ulps of an integer as that integer.
pub fn ceil_exact(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Options for [`adaptive_simpson`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    /// Absolute tolerance, scaled by `max(1, |estimate|)`.
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_depth: 40 }
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// The interval is first split into `pieces` equal panels so that
/// oscillating integrands do not fool the initial error estimate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    pieces: usize,
    opts: QuadratureOptions,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let pieces = pieces.max(1);
    let width = (b - a) / pieces as f64;
    let mut total = CompensatedSum::new();
    // crude first pass to set the relative scale
    let mut rough = 0.0;
    for p in 0..pieces {
        let lo = a + width * p as f64;
        let hi = if p + 1 == pieces { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        rough += (hi - lo) / 6.0 * (f(lo) + 4.0 * f(mid) + f(hi));
    }
    let tol = opts.tol * rough.abs().max(1.0) / pieces as f64;
    for p in 0..pieces {
        let lo = a + width * p as f64;
        let hi = if p + 1 == pieces { b } else { lo + width };
        let (flo, fhi) = (f(lo), f(hi));
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        let seg = Segment { a: lo, b: hi, fa: flo, fm: fmid, fb: fhi, whole };
        total.add(simpson_step(&f, seg, tol, opts.max_depth)?);
    }
    Ok(total.value())
}

#[derive(Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, s: Segment, tol: f64, depth: u32) -> Result<f64> {
    let m = 0.5 * (s.a + s.b);
    let lm = 0.5 * (s.a + m);
    let rm = 0.5 * (m + s.b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - s.a) / 6.0 * (s.fa + 4.0 * flm + s.fm);
    let right = (s.b - m) / 6.0 * (s.fm + 4.0 * frm + s.fb);
    let delta = left + right - s.whole;
    if !delta.is_finite() {
        return Err(Error::QuadratureFailed { a: s.a, b: s.b });
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureFailed { a: s.a, b: s.b });
    }
    let l = Segment { a: s.a, b: m, fa: s.fa, fm: flm, fb: s.fm, whole: left };
    let r = Segment { a: m, b: s.b, fa: s.fm, fm: frm, fb: s.fb, whole: right };
    Ok(simpson_step(f, l, 0.5 * tol, depth - 1)? + simpson_step(f, r, 0.5 * tol, depth - 1)?)
}
