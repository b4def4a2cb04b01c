//! The Good–Toulmin family: plain, truncated and smoothed estimators, the
//! Efron–Thisted special case, and automatic smoothing parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{alternating_sign, ceil_exact, powi_u64, CompensatedSum};
use crate::prevalence::PrevalenceHistogram;
use crate::smoothing::SmoothingDistribution;

/// `-(-t)^i`.
#[inline]
fn gt_coefficient(t: f64, i: u64) -> f64 {
    -alternating_sign(i) * powi_u64(t, i)
}

fn check_t(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("t must be finite and > 0, got {t}")))
    }
}

/// Good–Toulmin: `-Σ_i (-t)^i Φ_i`, summed in ascending `i`.
pub fn good_toulmin(hist: &PrevalenceHistogram, t: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for (i, phi) in hist.iter() {
        acc.add(gt_coefficient(t, i) * phi as f64);
    }
    acc.value()
}

/// Good–Toulmin series cut after the `ell`-th term.
pub fn truncated_gt(hist: &PrevalenceHistogram, t: f64, ell: u64) -> f64 {
    let mut acc = CompensatedSum::new();
    for (i, phi) in hist.iter().take_while(|&(i, _)| i <= ell) {
        acc.add(gt_coefficient(t, i) * phi as f64);
    }
    acc.value()
}

/// A linear estimator `Σ_i h_i Φ_i`.
///
/// Stored coefficients cover `h_1..=h_len`. Past that, coefficients come from
/// `rule` when one is attached and are zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimator {
    pub t: f64,
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<SmoothingDistribution>,
}

impl LinearEstimator {
    /// An estimator with explicit coefficients `h_1, h_2, …`.
    pub fn explicit(t: f64, coefficients: Vec<f64>) -> Self {
        Self { t, coefficients, rule: None }
    }

    /// `h_i` for `i ≥ 1`.
    pub fn coefficient(&self, i: u64) -> Result<f64> {
        if i == 0 {
            return Ok(0.0);
        }
        if let Some(h) = self.coefficients.get(i as usize - 1) {
            return Ok(*h);
        }
        match &self.rule {
            None => Ok(0.0),
            Some(l) => single_sgt_coefficient(l, self.t, i),
        }
    }

    /// `Σ_i h_i Φ_i`.
    pub fn apply(&self, hist: &PrevalenceHistogram) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        for (i, phi) in hist.iter() {
            let h = self.coefficient(i)?;
            if h != 0.0 {
                acc.add(h * phi as f64);
            }
        }
        Ok(acc.value())
    }
}

fn single_sgt_coefficient(l: &SmoothingDistribution, t: f64, i: u64) -> Result<f64> {
    let tail = l.tail(i);
    magnitude(t, i, tail).map(|m| -alternating_sign(i) * m)
}

/// `t^i · tail` without overflowing when `t^i` alone would.
fn magnitude(t: f64, i: u64, tail: f64) -> Result<f64> {
    if tail == 0.0 {
        return Ok(0.0);
    }
    let direct = powi_u64(t, i);
    let m = if direct.is_finite() {
        direct * tail
    } else {
        (i as f64 * t.ln() + tail.ln()).exp()
    };
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::CoefficientOverflow { index: i })
    }
}

/// Smoothed coefficients `h_i = -(-t)^i P(L ≥ i)` for `i = 1..=imax`.
///
/// Coefficients past the support of `L` are exactly zero, so only the
/// nonzero prefix is stored; the returned estimator carries `L` as its rule.
pub fn sgt_coefficients(l: &SmoothingDistribution, t: f64, imax: u64) -> Result<LinearEstimator> {
    check_t(t)?;
    l.validate()?;
    if imax == 0 {
        return Err(Error::invalid("imax must be at least 1"));
    }
    let top = l.support_max().map_or(imax, |s| s.min(imax));
    let tails = l.tails(top);
    let mut coefficients = Vec::with_capacity(top as usize);
    for i in 1..=top {
        let tail = tails[i as usize];
        if tail == 0.0 {
            // every later tail is zero as well
            break;
        }
        coefficients.push(-alternating_sign(i) * magnitude(t, i, tail)?);
    }
    Ok(LinearEstimator { t, coefficients, rule: Some(l.clone()) })
}

/// `Σ_i Φ_i h_i` with smoothed coefficients up to the histogram's largest index.
pub fn sgt_estimate(hist: &PrevalenceHistogram, l: &SmoothingDistribution, t: f64) -> Result<f64> {
    if hist.is_empty() {
        check_t(t)?;
        return Ok(0.0);
    }
    sgt_coefficients(l, t, hist.max_index())?.apply(hist)
}

/// Rules for choosing the smoothing distribution from `n` and `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingScheme {
    /// `L ~ Poisson(r)`, `r = ln(n(t+1)²/(t-1)) / (2t)`.
    Poisson,
    /// `L ~ Bin(k, 1/(t+1))`, `k = ⌈½ log₂(n t²/(t-1))⌉`: Efron–Thisted.
    BinomialEt,
    /// `L ~ Bin(k, 2/(t+2))`, `k = ⌈½ log₃(n t²/(t-1))⌉`.
    BinomialOpt,
    /// `L ~ Poisson(r)`, `r = ln(n t²) / (2t-1)`, for sampling without replacement.
    #[serde(rename = "hyper-poisson")]
    HypergeometricPoisson,
}

impl SmoothingScheme {
    pub const ALL: [SmoothingScheme; 4] =
        [Self::Poisson, Self::BinomialEt, Self::BinomialOpt, Self::HypergeometricPoisson];

    /// Stable name used on the command line and in output files.
    pub fn name(self) -> &'static str {
        match self {
            Self::Poisson => "poisson",
            Self::BinomialEt => "binomial-et",
            Self::BinomialOpt => "binomial-opt",
            Self::HypergeometricPoisson => "hyper-poisson",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Whether the scheme's parameter formula is defined at `t`.
    pub fn accepts(self, t: f64) -> bool {
        match self {
            Self::HypergeometricPoisson => t >= 1.0,
            _ => t > 1.0,
        }
    }
}

impl std::fmt::Display for SmoothingScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Smoothing distribution prescribed by `scheme` for sample size `n` and ratio `t`.
pub fn auto_params(n: u64, t: f64, scheme: SmoothingScheme) -> Result<SmoothingDistribution> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    check_t(t)?;
    if !scheme.accepts(t) {
        return Err(Error::SmoothingUndefined { t });
    }
    let n = n as f64;
    match scheme {
        SmoothingScheme::Poisson => {
            let r = (n * (t + 1.0).powi(2) / (t - 1.0)).ln() / (2.0 * t);
            SmoothingDistribution::poisson(r)
        }
        SmoothingScheme::BinomialEt => {
            let k = binomial_order(n, t, 2.0);
            SmoothingDistribution::binomial(k, 1.0 / (t + 1.0))
        }
        SmoothingScheme::BinomialOpt => {
            let k = binomial_order(n, t, 3.0);
            SmoothingDistribution::binomial(k, 2.0 / (t + 2.0))
        }
        SmoothingScheme::HypergeometricPoisson => {
            let r = (n * t * t).ln() / (2.0 * t - 1.0);
            SmoothingDistribution::poisson(r.max(0.0))
        }
    }
}

/// `⌈½ log_base(n t² / (t-1))⌉`, floored at zero.
fn binomial_order(n: f64, t: f64, base: f64) -> u64 {
    let arg = n * t * t / (t - 1.0);
    let k = ceil_exact(0.5 * arg.ln() / base.ln());
    if k <= 0.0 {
        0
    } else {
        k as u64
    }
}

/// Result of [`estimate_unseen`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnseenEstimate {
    pub value: f64,
    /// The histogram was empty, so the prediction is 0 by convention.
    pub empty_input: bool,
    /// `t ≤ 1` routed the call to plain Good–Toulmin.
    pub used_gt: bool,
    /// The raw value fell outside `[0, t·n]` and was clipped.
    pub clamped: bool,
}

/// Predicted number of new species in `t·n` further samples.
///
/// For `t ≤ 1` this is plain Good–Toulmin, otherwise the smoothed estimator
/// with `scheme`'s parameters. With `clamp`, the result is clipped to `[0, t·n]`.
pub fn estimate_unseen(
    hist: &PrevalenceHistogram,
    t: f64,
    scheme: SmoothingScheme,
    clamp: bool,
) -> Result<UnseenEstimate> {
    estimate_unseen_with_n(hist, hist.sample_size(), t, scheme, clamp)
}

/// Like [`estimate_unseen`] but with the sample-size parameter given
/// explicitly. Under Bernoulli-product sampling `n` is the number of
/// sampling units rather than the total count.
pub fn estimate_unseen_with_n(
    hist: &PrevalenceHistogram,
    n: u64,
    t: f64,
    scheme: SmoothingScheme,
    clamp: bool,
) -> Result<UnseenEstimate> {
    check_t(t)?;
    if hist.sample_size() == 0 {
        return Ok(UnseenEstimate { value: 0.0, empty_input: true, used_gt: t <= 1.0, clamped: false });
    }
    let (raw, used_gt) = if t <= 1.0 {
        (good_toulmin(hist, t), true)
    } else {
        let l = auto_params(n, t, scheme)?;
        (sgt_estimate(hist, &l, t)?, false)
    };
    let mut out = UnseenEstimate { value: raw, empty_input: false, used_gt, clamped: false };
    if clamp {
        let hi = t * hist.sample_size() as f64;
        let v = raw.clamp(0.0, hi);
        out.clamped = v != raw;
        out.value = v;
    }
    Ok(out)
}
