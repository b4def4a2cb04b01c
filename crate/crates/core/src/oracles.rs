//! Numerical checks of the identities and bounds the estimators rely on.
//!
//! Each check computes both sides independently (series against
//! quadrature, or Monte-Carlo against a closed form) and returns a
//! [`VerificationReport`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{auto_params, sgt_coefficients, LinearEstimator, SmoothingScheme};
use crate::exec::{derive_seed, Execution};
use crate::numeric::{adaptive_simpson, choose, DoubleDouble, QuadratureOptions};
use crate::prevalence::PrevalenceHistogram;
use crate::sampling::{
    expected_bias_poisson, expected_observed_poisson, expected_unseen_poisson, sample_path, true_unseen, Population,
    SamplingModel,
};
use crate::smoothing::{laguerre, SmoothingDistribution};

pub const BIAS_INTEGRAL_TOL: f64 = 1e-8;
pub const HYPER_IDENTITY_TOL: f64 = 1e-9;
/// Slack for rounding in the Laguerre envelope check.
pub const LAGUERRE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub grid: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(check: impl Into<String>, grid: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            grid: grid.into(),
            deviation,
            tolerance,
            // NaN deviations fail
            pass: deviation <= tolerance,
        }
    }

    /// Combine reports of the same check, keeping the worst deviation.
    fn merge(check: &str, grid: String, tolerance: f64, parts: &[f64]) -> Self {
        let worst = parts.iter().copied().fold(
            0.0f64,
            |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) },
        );
        Self::new(check, grid, worst, tolerance)
    }
}

/// `P(L ≥ i)` for `i = 0..=imax` in double-double, up to a common factor
/// returned alongside (`e^{-r}` for Poisson, 1 otherwise).
fn precise_tails(l: &SmoothingDistribution, imax: u64) -> Result<(Vec<DoubleDouble>, f64)> {
    let imax = imax as usize;
    let mut pmf: Vec<DoubleDouble> = Vec::new();
    let mut factor = 1.0;
    match l {
        SmoothingDistribution::Infinite => return Err(Error::UnboundedMoment),
        SmoothingDistribution::Deterministic { ell } => {
            pmf = vec![DoubleDouble::ZERO; *ell as usize + 1];
            pmf[*ell as usize] = DoubleDouble::from_f64(1.0);
        }
        SmoothingDistribution::Poisson { r } => {
            // r^l / l!, carried far enough past both r and imax
            let mut w = DoubleDouble::from_f64(1.0);
            let mut total = DoubleDouble::ZERO;
            let mut l = 0usize;
            loop {
                total = total.add(w);
                pmf.push(w);
                l += 1;
                w = w.mul_f64(*r).div_f64(l as f64);
                if l > imax && (l as f64) > *r && w.to_f64() <= 1e-40 * total.to_f64() {
                    break;
                }
            }
            factor = (-r).exp();
        }
        SmoothingDistribution::Binomial { k, q } => {
            let qd = DoubleDouble::from_f64(*q);
            let pd = DoubleDouble::from_f64(1.0).add_f64(-q);
            let k = *k as usize;
            let mut qpow = vec![DoubleDouble::from_f64(1.0); k + 1];
            let mut ppow = vec![DoubleDouble::from_f64(1.0); k + 1];
            for j in 1..=k {
                qpow[j] = qpow[j - 1].mul(qd);
                ppow[j] = ppow[j - 1].mul(pd);
            }
            let mut c = DoubleDouble::from_f64(1.0);
            for l in 0..=k {
                pmf.push(c.mul(qpow[l]).mul(ppow[k - l]));
                c = c.mul_f64((k - l) as f64).div_f64((l + 1) as f64);
            }
        }
        SmoothingDistribution::Custom(c) => {
            pmf = c.probabilities().iter().map(|&p| DoubleDouble::from_f64(p)).collect();
        }
    }
    let mut tails = vec![DoubleDouble::ZERO; imax.max(pmf.len()) + 1];
    for l in (0..pmf.len()).rev() {
        tails[l] = tails[l + 1].add(pmf[l]);
    }
    tails.truncate(imax + 1);
    Ok((tails, factor))
}

/// `g(y) = -Σ_{i≥1} P(L ≥ i) (-y)^i / i!`, summed in double-double.
pub fn tail_series(l: &SmoothingDistribution, y: f64) -> Result<f64> {
    let imax = match l.support_max() {
        Some(m) => m,
        None => match l {
            SmoothingDistribution::Poisson { r } => (2.0 * (y + r)).ceil() as u64 + 80,
            _ => return Err(Error::UnboundedMoment),
        },
    };
    let (tails, factor) = precise_tails(l, imax)?;
    let mut power = DoubleDouble::from_f64(1.0);
    let mut acc = DoubleDouble::ZERO;
    for (i, tail) in tails.iter().enumerate().skip(1) {
        power = power.mul_f64(-y).div_f64(i as f64);
        acc = acc.add(tail.mul(power));
    }
    Ok(-acc.to_f64() * factor)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Deviation between the two sides of
/// `g(y) - (1 - e^{-y}) = -e^{-y} ∫_0^y E[(-s)^L / L!] e^s ds`.
///
/// The left side is a double-double series, the right side adaptive
/// Simpson quadrature of the closed-form signed moment. The gap is
/// divided by `max(1, |left|, |right|)`.
pub fn check_bias_integral(l: &SmoothingDistribution, y: f64) -> Result<f64> {
    if !(y.is_finite() && (0.0..=30.0).contains(&y)) {
        return Err(Error::invalid(format!("y must lie in [0, 30], got {y}")));
    }
    l.validate()?;
    let left = tail_series(l, y)? + (-y).exp_m1();
    // the moment is finite here: unbounded laws were rejected by the series
    let integrand = |s: f64| l.signed_moment(s).map_or(f64::NAN, |m| m * (s - y).exp());
    let pieces = 4 * y.ceil() as usize + 4;
    let integral = adaptive_simpson(integrand, 0.0, y, pieces, QuadratureOptions::default());
    Ok(relative_gap(left, -integral?))
}

/// `Σ_{i<k} P(L = i) C(k-1, i) (-s)^i`.
fn binomial_signed_moment(l: &SmoothingDistribution, k: u64, s: f64) -> f64 {
    let mut acc = crate::numeric::CompensatedSum::new();
    let mut power = 1.0;
    for i in 0..k {
        acc.add(l.pmf(i) * choose(k - 1, i) * power);
        power *= -s;
    }
    acc.value()
}

/// Left side `Σ_{i=1}^k C(k, i) (-y)^i P(L < i)`.
fn hyper_left(l: &SmoothingDistribution, k: u64, y: f64) -> f64 {
    let mut acc = crate::numeric::CompensatedSum::new();
    let mut below = 0.0;
    let mut power = 1.0;
    for i in 1..=k {
        below += l.pmf(i - 1);
        power *= -y;
        acc.add(choose(k, i) * power * below.min(1.0));
    }
    acc.value()
}

/// Deviation between the two sides of
/// `Σ_{i=1}^k C(k,i)(-y)^i P(L<i) = -k(1-y)^k ∫_0^y E[C(k-1,L)(-s)^L](1-s)^{-k-1} ds`
/// for `0 ≤ y ≤ 0.95`, relative to `max(1, |left|, |right|)`.
pub fn check_hyper_identity(l: &SmoothingDistribution, k: u64, y: f64) -> Result<f64> {
    if k == 0 || k > 30 {
        return Err(Error::invalid(format!("k must lie in 1..=30, got {k}")));
    }
    if !(y.is_finite() && (0.0..=0.95).contains(&y)) {
        return Err(Error::invalid(format!("y must lie in [0, 0.95], got {y}")));
    }
    l.validate()?;
    let left = hyper_left(l, k, y);
    // (1-y)^k (1-s)^{-k-1} folded into one bounded factor
    let integrand = |s: f64| binomial_signed_moment(l, k, s) * ((1.0 - y) / (1.0 - s)).powi(k as i32) / (1.0 - s);
    let integral = adaptive_simpson(integrand, 0.0, y, 16, QuadratureOptions::default())?;
    Ok(relative_gap(left, -(k as f64) * integral))
}

/// The `y → 1` limit of the identity: the left side at `y = 1` against
/// `-E[C(k-1, L)(-1)^L]`.
pub fn check_hyper_limit(l: &SmoothingDistribution, k: u64) -> Result<f64> {
    if k == 0 || k > 30 {
        return Err(Error::invalid(format!("k must lie in 1..=30, got {k}")));
    }
    l.validate()?;
    Ok(relative_gap(hyper_left(l, k, 1.0), -binomial_signed_moment(l, k, 1.0)))
}

fn probabilistic_support(pop: &Population) -> Result<()> {
    match pop {
        Population::Probabilistic(_) => Ok(()),
        _ => Err(Error::ModelMismatch(
            "Poisson-model checks need a probabilistic population".into(),
        )),
    }
}

/// Draw `(hist, U)` pairs under the Poisson model, one seed per trial.
fn poisson_trials<T: Send>(
    pop: &Population,
    n: u64,
    t: f64,
    trials: usize,
    seed: u64,
    stream: u64,
    execution: Execution,
    f: impl Fn(&PrevalenceHistogram, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    execution
        .map(trials, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, i as u64));
            let path = sample_path(pop, SamplingModel::Poisson, n, &[t * n as f64], &mut rng)?;
            let hist = PrevalenceHistogram::from_counts(path.old.iter().copied());
            f(&hist, true_unseen(&path.old, &path.new[0]))
        })
        .into_iter()
        .collect()
}

/// Monte-Carlo check of `Var(Û - U) ≤ E[Φ+] E²[t^L] + E[U]` under the
/// Poisson model. Deviation is the excess of the empirical variance over
/// the bound (0 when below); tolerance is three standard errors.
#[allow(clippy::too_many_arguments)]
pub fn check_variance_bound(
    pop: &Population,
    n: u64,
    t: f64,
    l: &SmoothingDistribution,
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<VerificationReport> {
    probabilistic_support(pop)?;
    if trials < 2 {
        return Err(Error::invalid("need at least two trials"));
    }
    let moment = l.expected_t_power(t)?;
    let bound = expected_observed_poisson(pop, n)? * moment * moment + expected_unseen_poisson(pop, n, t)?;
    let cap = match l.support_max() {
        Some(m) => m,
        None => 4 * n + 64,
    };
    let est = sgt_coefficients(l, t, cap)?;
    let diffs = poisson_trials(pop, n, t, trials, seed, 2, execution, |hist, truth| {
        Ok(est.apply(hist)? - truth as f64)
    })?;
    let (mean, _) = crate::harness::mean_and_sd(&diffs);
    let sq: Vec<f64> = diffs.iter().map(|d| (d - mean) * (d - mean)).collect();
    let (m2, sd2) = crate::harness::mean_and_sd(&sq);
    let var = m2 * trials as f64 / (trials - 1) as f64;
    let se = sd2 / (trials as f64).sqrt();
    Ok(VerificationReport::new(
        "variance_bound",
        format!(
            "n={n}, t={t}, L={}, trials={trials}, bound={bound:.6e}, empirical={var:.6e}",
            describe(l)
        ),
        (var - bound).max(0.0),
        3.0 * se,
    ))
}

/// Monte-Carlo check that plain Good–Toulmin is unbiased under the
/// Poisson model: `|mean(Û - U)| ≤ 3 SE`.
pub fn check_unbiasedness_gt(
    pop: &Population,
    n: u64,
    t: f64,
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<VerificationReport> {
    probabilistic_support(pop)?;
    if trials < 2 {
        return Err(Error::invalid("need at least two trials"));
    }
    let diffs = poisson_trials(pop, n, t, trials, seed, 3, execution, |hist, truth| {
        Ok(crate::estimators::good_toulmin(hist, t) - truth as f64)
    })?;
    let (mean, se) = crate::harness::mean_and_se(&diffs);
    Ok(VerificationReport::new(
        "gt_unbiasedness",
        format!("n={n}, t={t}, trials={trials}, mean={mean:.6e}"),
        mean.abs(),
        3.0 * se,
    ))
}

/// Truncated GT keeps only the first `ell` terms.
pub fn truncated_gt_estimator(t: f64, ell: u64) -> LinearEstimator {
    LinearEstimator::explicit(t, (1..=ell).map(|i| -crate::numeric::powi_u64(-t, i)).collect())
}

/// Analytic bias `E[U - U^ℓ]` on the uniform distribution over `n/(ℓ+1)`
/// symbols, with the floor `n (t-1)^{5/2} / (6.05 t)` it must exceed.
pub fn truncated_gt_floor(n: u64, t: f64, ell: u64) -> Result<(f64, f64)> {
    let k = n / (ell + 1);
    if k == 0 {
        return Err(Error::invalid("n must be at least ell + 1"));
    }
    let pop = Population::probabilistic(vec![1.0 / k as f64; k as usize])?;
    let bias = -expected_bias_poisson(&pop, n, t, &truncated_gt_estimator(t, ell))?;
    let floor = n as f64 * (t - 1.0).powf(2.5) / (6.05 * t);
    Ok((bias, floor))
}

/// Largest `|L_k(y)| e^{-y/2} - 1` over random `k ≤ kmax`, `y ∈ [0, ymax]`.
pub fn laguerre_envelope_excess(points: usize, kmax: u64, ymax: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| {
            let k = rng.random_range(0..=kmax);
            let y = rng.random_range(0.0..=ymax);
            laguerre(k, y).abs() * (-y / 2.0).exp() - 1.0
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn describe(l: &SmoothingDistribution) -> String {
    match l {
        SmoothingDistribution::Poisson { r } => format!("poisson(r={r})"),
        SmoothingDistribution::Binomial { k, q } => format!("binomial(k={k},q={q})"),
        SmoothingDistribution::Deterministic { ell } => format!("deterministic({ell})"),
        SmoothingDistribution::Infinite => "infinite".into(),
        SmoothingDistribution::Custom(c) => format!("custom(support={})", c.probabilities().len()),
    }
}

/// Trial counts for the Monte-Carlo checks in [`verify_all`].
/// Check names accepted by [`VerifyOptions::checks`].
pub const CHECK_NAMES: [&str; 7] = [
    "bias_integral",
    "hyper_identity",
    "hyper_identity_limit",
    "laguerre_envelope",
    "truncated_gt_floor",
    "variance_bound",
    "gt_unbiasedness",
];

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub variance_trials: usize,
    pub unbiasedness_trials: usize,
    pub laguerre_points: usize,
    pub execution: Execution,
    /// Checks to run; empty means all of them.
    pub checks: Vec<String>,
}

impl VerifyOptions {
    fn wants(&self, check: &str) -> bool {
        self.checks.is_empty() || self.checks.iter().any(|c| c == check)
    }
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            variance_trials: 10_000,
            unbiasedness_trials: 100_000,
            laguerre_points: 10_000,
            execution: Execution::Parallel,
            checks: Vec::new(),
        }
    }
}

pub const BIAS_INTEGRAL_YS: [f64; 6] = [0.0, 0.1, 1.0, 5.0, 10.0, 30.0];
pub const HYPER_YS: [f64; 6] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9];

/// Smoothing laws covered by the bias-integral grid.
pub fn bias_integral_laws() -> Vec<SmoothingDistribution> {
    let mut laws = Vec::new();
    for r in [0.1, 0.5, 1.0, 2.0, 3.5, 5.0] {
        laws.push(SmoothingDistribution::Poisson { r });
    }
    for k in [1, 2, 3, 5, 10, 15, 20] {
        for q in [0.1, 0.3, 0.5, 0.7, 0.9] {
            laws.push(SmoothingDistribution::Binomial { k, q });
        }
    }
    for ell in 0..=3 {
        laws.push(SmoothingDistribution::Deterministic { ell });
    }
    laws
}

/// Smoothing laws covered by the hypergeometric-identity grid.
pub fn hyper_identity_laws() -> Vec<SmoothingDistribution> {
    let mut laws: Vec<_> = (0..=3)
        .map(|ell| SmoothingDistribution::Deterministic { ell })
        .collect();
    laws.push(SmoothingDistribution::Binomial { k: 3, q: 0.5 });
    laws.push(SmoothingDistribution::Poisson { r: 1.0 });
    laws
}

/// Run every check over its standard grid.
pub fn verify_all(opts: &VerifyOptions) -> Result<Vec<VerificationReport>> {
    if let Some(bad) = opts.checks.iter().find(|c| !CHECK_NAMES.contains(&c.as_str())) {
        return Err(Error::invalid(format!("unknown check `{bad}`")));
    }
    let mut reports = Vec::new();

    for l in bias_integral_laws().into_iter().filter(|_| opts.wants("bias_integral")) {
        let devs = BIAS_INTEGRAL_YS
            .iter()
            .map(|&y| check_bias_integral(&l, y))
            .collect::<Result<Vec<_>>>()?;
        reports.push(VerificationReport::merge(
            "bias_integral",
            format!("L={}, y in {:?}", describe(&l), BIAS_INTEGRAL_YS),
            BIAS_INTEGRAL_TOL,
            &devs,
        ));
    }

    for l in hyper_identity_laws() {
        if opts.wants("hyper_identity") {
            let mut devs = Vec::new();
            for k in 1..=20 {
                for &y in &HYPER_YS {
                    devs.push(check_hyper_identity(&l, k, y)?);
                }
            }
            reports.push(VerificationReport::merge(
                "hyper_identity",
                format!("L={}, k in 1..=20, y in {:?}", describe(&l), HYPER_YS),
                HYPER_IDENTITY_TOL,
                &devs,
            ));
        }
        if !opts.wants("hyper_identity_limit") {
            continue;
        }
        let limits = (1..=20).map(|k| check_hyper_limit(&l, k)).collect::<Result<Vec<_>>>()?;
        reports.push(VerificationReport::merge(
            "hyper_identity_limit",
            format!("L={}, k in 1..=20, y=1", describe(&l)),
            HYPER_IDENTITY_TOL,
            &limits,
        ));
    }

    if opts.wants("laguerre_envelope") {
        let excess = laguerre_envelope_excess(opts.laguerre_points, 200, 50.0, derive_seed(opts.seed, 4, 0));
        reports.push(VerificationReport::new(
            "laguerre_envelope",
            format!("{} random points, k <= 200, y in [0, 50]", opts.laguerre_points),
            excess.max(0.0),
            LAGUERRE_TOL,
        ));
    }

    if opts.wants("truncated_gt_floor") {
        let mut floor_gaps = Vec::new();
        for ell in [2, 4] {
            for t in [1.5, 2.0, 3.0] {
                for n in [300, 3000] {
                    let (bias, floor) = truncated_gt_floor(n, t, ell)?;
                    floor_gaps.push(if bias > floor {
                        0.0
                    } else {
                        floor - bias + f64::MIN_POSITIVE
                    });
                }
            }
        }
        reports.push(VerificationReport::merge(
            "truncated_gt_floor",
            "ell in {2, 4}, t in {1.5, 2, 3}, n in {300, 3000}".into(),
            0.0,
            &floor_gaps,
        ));
    }

    let uniform = Population::probabilistic(vec![0.01; 100])?;
    if opts.wants("variance_bound") {
        let poisson_l = auto_params(100, 2.0, SmoothingScheme::Poisson)?;
        reports.push(check_variance_bound(
            &uniform,
            100,
            2.0,
            &poisson_l,
            opts.variance_trials,
            opts.seed,
            opts.execution,
        )?);
        let binom_l = auto_params(100, 2.0, SmoothingScheme::BinomialOpt)?;
        reports.push(check_variance_bound(
            &uniform,
            100,
            2.0,
            &binom_l,
            opts.variance_trials,
            opts.seed,
            opts.execution,
        )?);
    }
    if opts.wants("gt_unbiasedness") {
        for t in [0.5, 2.0] {
            reports.push(check_unbiasedness_gt(
                &uniform,
                100,
                t,
                opts.unbiasedness_trials,
                opts.seed,
                opts.execution,
            )?);
        }
    }
    Ok(reports)
}

/// Plain-text table of reports.
pub fn render_table(reports: &[VerificationReport]) -> String {
    let mut out = format!(
        "{:<22} {:>12} {:>12}  {:<4}  grid\n",
        "check", "deviation", "tolerance", "ok"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<22} {:>12.3e} {:>12.3e}  {:<4}  {}\n",
            r.check,
            r.deviation,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" },
            r.grid
        ));
    }
    out
}
