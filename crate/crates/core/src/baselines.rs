//! Classical richness estimators used for comparison.
//!
//! Each support-size estimate `Ŝ` is turned into a prediction for `m = t·n`
//! new samples with the Shen–Chao–Lin extrapolation
//!
//! ```text
//! U = f0 · [1 - (1 - f1/(n·f0))^m],   f0 = max(Ŝ - D, 0)
//! ```
//!
//! where `D` is the number of observed species and `f1` the singleton count.
//!
//! Support-size formulas:
//!
//! * Chao–Lee (Chao & Lee 1992, eqs. 2.9–2.11): coverage `C = 1 - f1/n`,
//!   `Ŝ = D/C + (f1/C)·γ²` with
//!   `γ² = max(0, (D/C)·Σ i(i-1) f_i / (n(n-1)) - 1)`.
//! * ACE (Chao 2005; Chao & Lee 1992 restricted to rare species): the same
//!   construction applied to abundances `≤ cutoff` (default 10), with the
//!   abundant species added back unchanged.
//! * Jackknife of order `k` (Burnham & Overton 1978; Smith & van Belle 1984):
//!   `Ŝ = D + Σ_{i≤k} c_i f_i` where `c_i` are the generalized-jackknife
//!   weights, e.g. `c_1 = (n-1)/n` for order 1 and
//!   `c_1 = (2n-3)/n, c_2 = -(n-2)²/(n(n-1))` for order 2.
//! * Shen–Chao–Lin on its own (Shen, Chao & Lin 2003) uses the
//!   bias-corrected Chao1 unseen count `f0 = ((n-1)/n)·f1(f1-1)/(2(f2+1))`.
//! * Empirical predicts no new species at all.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prevalence::PrevalenceHistogram;

/// Default rare-abundance cutoff for ACE.
pub const ACE_RARE_CUTOFF: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BaselineKind {
    ChaoLee,
    Ace { cutoff: u64 },
    Jackknife { order: u8 },
    ShenChaoLin,
    Empirical,
}

impl BaselineKind {
    pub fn ace() -> Self {
        Self::Ace { cutoff: ACE_RARE_CUTOFF }
    }

    pub fn jackknife(order: u8) -> Result<Self> {
        if (1..=5).contains(&order) {
            Ok(Self::Jackknife { order })
        } else {
            Err(Error::invalid(format!("jackknife order must be 1..=5, got {order}")))
        }
    }

    /// Whether the estimator relies on the sample-coverage estimate.
    pub fn coverage_based(self) -> bool {
        matches!(self, Self::ChaoLee | Self::Ace { .. })
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ChaoLee => f.write_str("chao-lee"),
            Self::Ace { cutoff } if *cutoff == ACE_RARE_CUTOFF => f.write_str("ace"),
            Self::Ace { cutoff } => write!(f, "ace{cutoff}"),
            Self::Jackknife { order } => write!(f, "jackknife{order}"),
            Self::ShenChaoLin => f.write_str("scl"),
            Self::Empirical => f.write_str("empirical"),
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse(format!("unknown baseline `{s}`"));
        match s {
            "chao-lee" => Ok(Self::ChaoLee),
            "ace" => Ok(Self::ace()),
            "scl" => Ok(Self::ShenChaoLin),
            "empirical" => Ok(Self::Empirical),
            "jackknife" => Self::jackknife(1),
            _ => {
                if let Some(order) = s.strip_prefix("jackknife") {
                    Self::jackknife(order.parse().map_err(|_| bad())?)
                } else if let Some(cut) = s.strip_prefix("ace") {
                    let cutoff: u64 = cut.parse().map_err(|_| bad())?;
                    if cutoff == 0 {
                        return Err(bad());
                    }
                    Ok(Self::Ace { cutoff })
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl From<BaselineKind> for String {
    fn from(k: BaselineKind) -> Self {
        k.to_string()
    }
}

impl TryFrom<String> for BaselineKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Coverage-style richness estimate on a subset of the histogram:
/// `D/C + (f1/C)·γ²`.
fn coverage_richness(hist: &PrevalenceHistogram, keep: impl Fn(u64) -> bool) -> Result<f64> {
    let (mut d, mut n, mut pairs) = (0u64, 0u64, 0f64);
    for (i, phi) in hist.iter().filter(|(i, _)| keep(*i)) {
        d += phi;
        n += i * phi;
        pairs += (i * (i - 1)) as f64 * phi as f64;
    }
    if n == 0 {
        return Ok(0.0);
    }
    let f1 = hist.get(1) as f64;
    if hist.get(1) == n {
        return Err(Error::DegenerateCoverage);
    }
    let (d, n) = (d as f64, n as f64);
    let coverage = 1.0 - f1 / n;
    let gamma_sq = ((d / coverage) * pairs / (n * (n - 1.0)) - 1.0).max(0.0);
    Ok(d / coverage + f1 / coverage * gamma_sq)
}

/// Generalized jackknife weight on `f_i` for order `k` and sample size `n`:
/// `-(1/(k!·n(n-1)…(n-i+1))) Σ_{j=i}^{k} (-1)^j C(k,j) (n-j)^k j!/(j-i)!`.
pub fn jackknife_coefficient(k: u8, n: u64, i: u64) -> f64 {
    let k = u64::from(k);
    if i == 0 || i > k || n < i {
        return 0.0;
    }
    let falling: f64 = (0..i).map(|j| (n - j) as f64).product();
    let k_fact: f64 = (1..=k).map(|j| j as f64).product();
    let numerator = match exact_jackknife_sum(k, n, i) {
        Some(v) => v as f64,
        None => approximate_jackknife_sum(k, n, i),
    };
    -numerator / (k_fact * falling)
}

fn exact_jackknife_sum(k: u64, n: u64, i: u64) -> Option<i128> {
    let mut total: i128 = 0;
    for j in i..=k {
        if j > n {
            break;
        }
        let binom = crate::numeric::choose(k, j) as i128;
        let base = i128::from(n - j);
        let power = base.checked_pow(k as u32)?;
        let ratio: i128 = ((j - i + 1)..=j).map(i128::from).product();
        let term = binom.checked_mul(power)?.checked_mul(ratio)?;
        total = if j % 2 == 0 { total.checked_add(term)? } else { total.checked_sub(term)? };
    }
    Some(total)
}

/// The same sum for sample sizes whose powers overflow `i128`: expand
/// `(n-j)^k` in powers of `n` so the large leading terms cancel exactly in
/// integer arithmetic before anything is rounded.
fn approximate_jackknife_sum(k: u64, n: u64, i: u64) -> f64 {
    let nf = n as f64;
    crate::numeric::compensated_sum((0..=k).map(|a| {
        let inner: i128 = (i..=k)
            .map(|j| {
                let sign = if (j + a) % 2 == 0 { 1 } else { -1 };
                let ratio: i128 = ((j - i + 1)..=j).map(i128::from).product();
                sign * crate::numeric::choose(k, j) as i128 * ratio * i128::from(j).pow(a as u32)
            })
            .sum();
        let coeff = crate::numeric::choose(k, a) as i128 * inner;
        coeff as f64 * nf.powi((k - a) as i32)
    }))
}

/// Estimated total number of species `Ŝ`, or `None` for estimators that
/// do not produce one.
pub fn support_estimate(hist: &PrevalenceHistogram, kind: BaselineKind) -> Result<Option<f64>> {
    let d = hist.observed_count() as f64;
    let n = hist.sample_size();
    Ok(Some(match kind {
        BaselineKind::Empirical => return Ok(Some(d)),
        BaselineKind::ChaoLee => coverage_richness(hist, |_| true)?,
        BaselineKind::Ace { cutoff } => {
            let abundant: u64 = hist.iter().filter(|(i, _)| *i > cutoff).map(|(_, p)| p).sum();
            abundant as f64 + coverage_richness(hist, |i| i <= cutoff)?
        }
        BaselineKind::Jackknife { order } => {
            d + crate::numeric::compensated_sum(
                (1..=u64::from(order)).map(|i| jackknife_coefficient(order, n, i) * hist.get(i) as f64),
            )
        }
        BaselineKind::ShenChaoLin => {
            let (f1, f2) = (hist.get(1) as f64, hist.get(2) as f64);
            let nf = n as f64;
            d + (nf - 1.0) / nf * f1 * (f1 - 1.0).max(0.0) / (2.0 * (f2 + 1.0))
        }
    }))
}

/// Shen–Chao–Lin prediction of new species among `m` further samples,
/// given an unseen-support estimate `f0`.
pub fn shen_chao_lin(hist: &PrevalenceHistogram, f0: f64, m: f64) -> f64 {
    let n = hist.sample_size() as f64;
    let f1 = hist.get(1) as f64;
    if !(f0 > 0.0) || n == 0.0 {
        return 0.0;
    }
    let base = (1.0 - f1 / (n * f0)).max(0.0);
    f0 * (1.0 - base.powf(m))
}

/// Predicted number of new species in `t·n` further samples.
///
/// Coverage-based kinds fail with [`Error::DegenerateCoverage`] when every
/// observation is a singleton.
pub fn baseline_unseen(hist: &PrevalenceHistogram, t: f64, kind: BaselineKind) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("t must be finite and > 0, got {t}")));
    }
    if hist.is_empty() {
        return Err(Error::invalid("baseline estimators need a nonempty histogram"));
    }
    if kind == BaselineKind::Empirical {
        return Ok(0.0);
    }
    let s_hat = support_estimate(hist, kind)?.expect("all non-empirical kinds estimate support");
    let f0 = (s_hat - hist.observed_count() as f64).max(0.0);
    Ok(shen_chao_lin(hist, f0, t * hist.sample_size() as f64))
}

/// [`baseline_unseen`] with the degenerate-coverage fallback: when a
/// coverage-based kind cannot be evaluated, the first-order jackknife value
/// is returned and the flag is set.
pub fn baseline_unseen_or_fallback(
    hist: &PrevalenceHistogram,
    t: f64,
    kind: BaselineKind,
) -> Result<(f64, bool)> {
    match baseline_unseen(hist, t, kind) {
        Err(Error::DegenerateCoverage) => {
            Ok((baseline_unseen(hist, t, BaselineKind::Jackknife { order: 1 })?, true))
        }
        other => other.map(|v| (v, false)),
    }
}
