//! Populations, the four sampling models, and closed-form expectations
//! under Poisson sampling.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::io::Read;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::LinearEstimator;
use crate::numeric::{ln_factorial, CompensatedSum};

/// A finite population the samplers draw from.
#[derive(Debug, Clone, PartialEq)]
pub enum Population {
    /// Symbol probabilities summing to one.
    Probabilistic(Vec<f64>),
    /// Per-symbol presence probabilities in `(0, 1]`; their sum is unconstrained.
    BernoulliProduct(Vec<f64>),
    /// Ball counts per symbol for draws without replacement.
    HypergeometricUrn(Vec<u64>),
}

impl Population {
    pub fn probabilistic(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("population has no symbols"));
        }
        if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::invalid(format!("symbol probability {x} is not positive")));
        }
        let total = crate::numeric::compensated_sum(p.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self::Probabilistic(p))
    }

    /// Normalize positive weights into a probability vector.
    pub fn from_weights(w: Vec<f64>) -> Result<Self> {
        if let Some(x) = w.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::invalid(format!("weight {x} is not positive")));
        }
        let total = crate::numeric::compensated_sum(w.iter().copied());
        Self::probabilistic(w.into_iter().map(|x| x / total).collect())
    }

    pub fn bernoulli_product(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("population has no symbols"));
        }
        if let Some(x) = p.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
            return Err(Error::invalid(format!("presence probability {x} is outside (0, 1]")));
        }
        Ok(Self::BernoulliProduct(p))
    }

    pub fn urn(r: Vec<u64>) -> Result<Self> {
        if r.is_empty() {
            return Err(Error::invalid("urn has no symbols"));
        }
        if r.contains(&0) {
            return Err(Error::invalid("urn capacities must be at least 1"));
        }
        Ok(Self::HypergeometricUrn(r))
    }

    /// Number of symbols.
    pub fn support_size(&self) -> usize {
        match self {
            Self::Probabilistic(p) | Self::BernoulliProduct(p) => p.len(),
            Self::HypergeometricUrn(r) => r.len(),
        }
    }

    /// Total balls `R` in an urn.
    pub fn urn_total(&self) -> Option<u64> {
        match self {
            Self::HypergeometricUrn(r) => Some(r.iter().sum()),
            _ => None,
        }
    }

    /// Read a `symbol,weight` CSV. Weights are normalized for
    /// probabilistic populations, read as presence probabilities for
    /// Bernoulli-product ones and as integer capacities for urns.
    pub fn from_csv<R: Read>(reader: R, kind: PopulationKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "symbol" || &headers[1] != "weight" {
            return Err(Error::parse("expected header `symbol,weight`"));
        }
        let mut seen = std::collections::HashSet::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if !seen.insert(rec[0].to_string()) {
                return Err(Error::parse(format!("duplicate symbol `{}`", &rec[0])));
            }
            weights.push(rec[1].to_string());
        }
        match kind {
            PopulationKind::Probabilistic | PopulationKind::BernoulliProduct => {
                let w = weights
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|e| Error::parse(format!("weight `{s}`: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                if kind == PopulationKind::Probabilistic {
                    Self::from_weights(w)
                } else {
                    Self::bernoulli_product(w)
                }
            }
            PopulationKind::HypergeometricUrn => {
                let r = weights
                    .iter()
                    .map(|s| s.parse::<u64>().map_err(|e| Error::parse(format!("capacity `{s}`: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                Self::urn(r)
            }
        }
    }

    pub fn kind(&self) -> PopulationKind {
        match self {
            Self::Probabilistic(_) => PopulationKind::Probabilistic,
            Self::BernoulliProduct(_) => PopulationKind::BernoulliProduct,
            Self::HypergeometricUrn(_) => PopulationKind::HypergeometricUrn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopulationKind {
    Probabilistic,
    BernoulliProduct,
    HypergeometricUrn,
}

/// Named population families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PopulationSpec {
    /// `k` equiprobable symbols.
    Uniform { k: usize },
    /// Half the symbols at `1/(2k)`, half at `3/(2k)`; `k` even.
    TwoStep { k: usize },
    /// `p_i ∝ 1/(i + shift)^s` for `i = 1..=k`.
    Zipf { k: usize, s: f64, shift: f64 },
    /// One draw from the symmetric Dirichlet(α) prior, fixed by `seed`.
    Dirichlet { k: usize, alpha: f64, seed: u64 },
    /// Urn with `copies` balls of each of `k` symbols.
    Urn { k: usize, copies: u64 },
    /// `k` symbols each present in a sampling unit with probability `p`.
    Bernoulli { k: usize, p: f64 },
}

impl PopulationSpec {
    pub fn realize(&self) -> Result<Population> {
        match *self {
            Self::Uniform { k } => {
                check_k(k)?;
                Population::probabilistic(vec![1.0 / k as f64; k])
            }
            Self::TwoStep { k } => {
                check_k(k)?;
                if k % 2 != 0 {
                    return Err(Error::invalid("two-step population needs an even support size"));
                }
                let lo = 1.0 / (2.0 * k as f64);
                let hi = 3.0 / (2.0 * k as f64);
                let mut p = vec![lo; k / 2];
                p.extend(std::iter::repeat(hi).take(k / 2));
                Population::probabilistic(p)
            }
            Self::Zipf { k, s, shift } => {
                check_k(k)?;
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::invalid(format!("Zipf exponent must be > 0, got {s}")));
                }
                if !(shift.is_finite() && shift >= 0.0) {
                    return Err(Error::invalid(format!("Zipf shift must be >= 0, got {shift}")));
                }
                Population::from_weights((1..=k).map(|i| (i as f64 + shift).powf(-s)).collect())
            }
            Self::Dirichlet { k, alpha, seed } => {
                check_k(k)?;
                let gamma = Gamma::new(alpha, 1.0)
                    .map_err(|_| Error::invalid(format!("Dirichlet alpha must be > 0, got {alpha}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // tiny alphas can underflow to exact zeros; those symbols are dropped
                let w: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).filter(|x| *x > 0.0).collect();
                if w.is_empty() {
                    return Err(Error::invalid("Dirichlet draw underflowed for every symbol"));
                }
                Population::from_weights(w)
            }
            Self::Urn { k, copies } => {
                check_k(k)?;
                Population::urn(vec![copies; k])
            }
            Self::Bernoulli { k, p } => {
                check_k(k)?;
                Population::bernoulli_product(vec![p; k])
            }
        }
    }
}

impl PopulationSpec {
    /// Realize the population and check it suits `model`.
    pub fn realize_for(&self, model: SamplingModel) -> Result<Population> {
        let pop = self.realize()?;
        if pop.kind() != model.required_kind() {
            return Err(Error::ModelMismatch(format!("population `{self}` cannot be sampled under the {model} model")));
        }
        Ok(pop)
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::invalid("support size must be at least 1"))
    } else {
        Ok(())
    }
}

impl fmt::Display for PopulationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform { k } => write!(f, "uniform:{k}"),
            Self::TwoStep { k } => write!(f, "twostep:{k}"),
            Self::Zipf { k, s, shift } => write!(f, "zipf:{k}:{s}:{shift}"),
            Self::Dirichlet { k, alpha, seed } => write!(f, "dirichlet:{k}:{alpha}:{seed}"),
            Self::Urn { k, copies } => write!(f, "urn:{k}:{copies}"),
            Self::Bernoulli { k, p } => write!(f, "bernoulli:{k}:{p}"),
        }
    }
}

impl FromStr for PopulationSpec {
    type Err = Error;

    /// `uniform:K`, `twostep:K`, `zipf:K[:S[:SHIFT]]`, `dirichlet:K:ALPHA[:SEED]`,
    /// `urn:K:COPIES`, `bernoulli:K:P`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::parse(format!("cannot parse population `{s}`"));
        let num = |i: usize| -> Result<f64> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let int = |i: usize| -> Result<u64> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let arity = |lo: usize, hi: usize| if (lo..=hi).contains(&parts.len()) { Ok(()) } else { Err(bad()) };
        let spec = match parts[0] {
            "uniform" => {
                arity(2, 2)?;
                Self::Uniform { k: int(1)? as usize }
            }
            "twostep" => {
                arity(2, 2)?;
                Self::TwoStep { k: int(1)? as usize }
            }
            "zipf" => {
                arity(2, 4)?;
                let s = if parts.len() > 2 { num(2)? } else { 1.0 };
                let shift = if parts.len() > 3 { num(3)? } else { 0.0 };
                Self::Zipf { k: int(1)? as usize, s, shift }
            }
            "dirichlet" => {
                arity(3, 4)?;
                let seed = if parts.len() > 3 { int(3)? } else { 0 };
                Self::Dirichlet { k: int(1)? as usize, alpha: num(2)?, seed }
            }
            "urn" => {
                arity(3, 3)?;
                Self::Urn { k: int(1)? as usize, copies: int(2)? }
            }
            "bernoulli" => {
                arity(3, 3)?;
                Self::Bernoulli { k: int(1)? as usize, p: num(2)? }
            }
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

/// How the observed and future samples are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingModel {
    /// `n` then `m` i.i.d. draws.
    Multinomial,
    /// Sample sizes `Poisson(n)` and `Poisson(m)`; per-symbol counts independent.
    Poisson,
    /// `n + m` draws without replacement from an urn.
    Hypergeometric,
    /// `n` then `m` sampling units, each recording every symbol independently.
    BernoulliProduct,
}

impl SamplingModel {
    pub const ALL: [SamplingModel; 4] =
        [Self::Multinomial, Self::Poisson, Self::Hypergeometric, Self::BernoulliProduct];

    pub fn name(self) -> &'static str {
        match self {
            Self::Multinomial => "multinomial",
            Self::Poisson => "poisson",
            Self::Hypergeometric => "hypergeometric",
            Self::BernoulliProduct => "bernoulli-product",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    fn required_kind(self) -> PopulationKind {
        match self {
            Self::Multinomial | Self::Poisson => PopulationKind::Probabilistic,
            Self::Hypergeometric => PopulationKind::HypergeometricUrn,
            Self::BernoulliProduct => PopulationKind::BernoulliProduct,
        }
    }
}

impl fmt::Display for SamplingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-symbol counts in the observed sample and in one or more nested
/// future samples. `new[j]` is cumulative: it contains `new[j-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePath {
    pub old: Vec<u64>,
    pub new: Vec<Vec<u64>>,
}

/// Observed and future per-symbol counts, indexed by symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePair {
    pub old: Vec<u64>,
    pub new: Vec<u64>,
}

/// Draw an observed sample of size `n` and a future sample of size `m`.
pub fn sample(pop: &Population, model: SamplingModel, n: u64, m: u64, seed: u64) -> Result<SamplePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = sample_path(pop, model, n, &[m as f64], &mut rng)?;
    Ok(SamplePair { old: path.old, new: path.new.pop().expect("one future size requested") })
}

/// Draw an observed sample of size `n` and nested future samples of sizes
/// `future[0] ≤ future[1] ≤ …`.
///
/// Fixed-size models round each future size to the nearest integer; the
/// Poisson model uses them as exact means.
pub fn sample_path<R: Rng + ?Sized>(
    pop: &Population,
    model: SamplingModel,
    n: u64,
    future: &[f64],
    rng: &mut R,
) -> Result<SamplePath> {
    if pop.kind() != model.required_kind() {
        return Err(Error::ModelMismatch(format!(
            "{model} sampling needs a {:?} population, got {:?}",
            model.required_kind(),
            pop.kind()
        )));
    }
    if future.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::invalid("future sample sizes must be finite and >= 0"));
    }
    if future.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("future sample sizes must be nondecreasing"));
    }
    let k = pop.support_size();
    let sizes: Vec<f64> = match model {
        SamplingModel::Poisson => future.to_vec(),
        _ => future.iter().map(|m| m.round()).collect(),
    };
    let old_draws: fn(&Population, f64, &mut R) -> Result<Vec<u64>>;
    let mut path = SamplePath { old: Vec::new(), new: Vec::with_capacity(sizes.len()) };
    match (model, pop) {
        (SamplingModel::Hypergeometric, Population::HypergeometricUrn(r)) => {
            let total: u64 = r.iter().sum();
            let last = sizes.last().copied().unwrap_or(0.0) as u64;
            if n.saturating_add(last) > total {
                return Err(Error::SampleTooLarge { requested: n.saturating_add(last), available: total });
            }
            let mut urn = Fenwick::from_counts(r);
            path.old = urn.draw_many(n, rng);
            let mut cum = vec![0u64; k];
            let mut done = 0u64;
            for m in &sizes {
                let m = *m as u64;
                add_into(&mut cum, &urn.draw_many(m - done, rng));
                done = m;
                path.new.push(cum.clone());
            }
            return Ok(path);
        }
        (SamplingModel::Multinomial, _) => old_draws = multinomial_counts::<R>,
        (SamplingModel::Poisson, _) => old_draws = poisson_counts::<R>,
        (SamplingModel::BernoulliProduct, _) => old_draws = bernoulli_counts::<R>,
        _ => unreachable!("kind checked above"),
    }
    path.old = old_draws(pop, n as f64, rng)?;
    let mut cum = vec![0u64; k];
    let mut done = 0.0;
    for m in sizes {
        add_into(&mut cum, &old_draws(pop, m - done, rng)?);
        done = m;
        path.new.push(cum.clone());
    }
    Ok(path)
}

fn add_into(acc: &mut [u64], inc: &[u64]) {
    for (a, b) in acc.iter_mut().zip(inc) {
        *a += b;
    }
}

fn probabilities(pop: &Population) -> &[f64] {
    match pop {
        Population::Probabilistic(p) | Population::BernoulliProduct(p) => p,
        Population::HypergeometricUrn(_) => unreachable!("kind checked by caller"),
    }
}

/// Multinomial counts by sequential conditional binomials.
fn multinomial_counts<R: Rng + ?Sized>(pop: &Population, size: f64, rng: &mut R) -> Result<Vec<u64>> {
    let p = probabilities(pop);
    let mut left = size as u64;
    let mut mass_left = 1.0f64;
    let mut out = vec![0u64; p.len()];
    for (x, px) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if x + 1 == p.len() {
            out[x] = left;
            break;
        }
        let q = (px / mass_left).clamp(0.0, 1.0);
        let c = Binomial::new(left, q).map_err(|e| Error::invalid(e.to_string()))?.sample(rng);
        out[x] = c;
        left -= c;
        mass_left -= px;
    }
    Ok(out)
}

fn poisson_counts<R: Rng + ?Sized>(pop: &Population, size: f64, rng: &mut R) -> Result<Vec<u64>> {
    probabilities(pop)
        .iter()
        .map(|px| {
            let lambda = size * px;
            if lambda <= 0.0 {
                return Ok(0);
            }
            let d = Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?;
            Ok(d.sample(rng) as u64)
        })
        .collect()
}

fn bernoulli_counts<R: Rng + ?Sized>(pop: &Population, size: f64, rng: &mut R) -> Result<Vec<u64>> {
    let units = size as u64;
    probabilities(pop)
        .iter()
        .map(|px| Ok(Binomial::new(units, *px).map_err(|e| Error::invalid(e.to_string()))?.sample(rng)))
        .collect()
}

/// Binary indexed tree over remaining ball counts, for exact draws
/// without replacement in `O(log K)` each.
struct Fenwick {
    tree: Vec<u64>,
    total: u64,
}

impl Fenwick {
    fn from_counts(counts: &[u64]) -> Self {
        let n = counts.len();
        let mut tree = vec![0u64; n + 1];
        for (i, c) in counts.iter().enumerate() {
            tree[i + 1] += c;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        Self { tree, total: counts.iter().sum() }
    }

    /// Index of the symbol holding ball number `u` (0-based) in cumulative order.
    fn find(&self, mut u: u64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0usize;
        let mut step = if n == 0 { 0 } else { 1usize << (usize::BITS - 1 - n.leading_zeros()) };
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                u -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos
    }

    fn remove_one(&mut self, idx: usize) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] -= 1;
            i += i & i.wrapping_neg();
        }
        self.total -= 1;
    }

    fn draw_many<R: Rng + ?Sized>(&mut self, draws: u64, rng: &mut R) -> Vec<u64> {
        let mut out = vec![0u64; self.tree.len() - 1];
        for _ in 0..draws {
            let u = rng.random_range(0..self.total);
            let idx = self.find(u);
            out[idx] += 1;
            self.remove_one(idx);
        }
        out
    }
}

/// Number of symbols present in `new` but absent from `old` (dense counts).
pub fn true_unseen(old: &[u64], new: &[u64]) -> u64 {
    debug_assert_eq!(old.len(), new.len());
    old.iter().zip(new).filter(|(o, n)| **o == 0 && **n > 0).count() as u64
}

/// Map-based variant of [`true_unseen`].
pub fn true_unseen_map<K: Hash + Eq, S: std::hash::BuildHasher>(
    old: &HashMap<K, u64, S>,
    new: &HashMap<K, u64, S>,
) -> u64 {
    new.iter().filter(|(k, c)| **c > 0 && old.get(*k).copied().unwrap_or(0) == 0).count() as u64
}

/// Symbol probabilities grouped by exact value, with multiplicities.
fn grouped(p: &[f64]) -> Vec<(f64, usize)> {
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for x in sorted {
        match out.last_mut() {
            Some((v, c)) if *v == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

fn probabilistic(pop: &Population) -> Result<&[f64]> {
    match pop {
        Population::Probabilistic(p) => Ok(p),
        _ => Err(Error::ModelMismatch("expected a probabilistic population".into())),
    }
}

/// `E[U] = Σ_x e^{-n p_x} (1 - e^{-t n p_x})` under Poisson sampling.
pub fn expected_unseen_poisson(pop: &Population, n: u64, t: f64) -> Result<f64> {
    let p = probabilistic(pop)?;
    let n = n as f64;
    Ok(crate::numeric::compensated_sum(
        grouped(p).into_iter().map(|(px, c)| c as f64 * (-n * px).exp() * -(-t * n * px).exp_m1()),
    ))
}

/// `E[Φ+] = Σ_x (1 - e^{-n p_x})` under Poisson sampling.
pub fn expected_observed_poisson(pop: &Population, n: u64) -> Result<f64> {
    let p = probabilistic(pop)?;
    let n = n as f64;
    Ok(crate::numeric::compensated_sum(
        grouped(p).into_iter().map(|(px, c)| c as f64 * -(-n * px).exp_m1()),
    ))
}

/// Cap on series terms in [`expected_bias_poisson`].
pub const BIAS_SERIES_CAP: u64 = 10_000;

/// Exact bias `E[Û - U]` of a linear estimator under Poisson sampling:
/// `Σ_x e^{-λ_x} (h(λ_x) - (1 - e^{-tλ_x}))` with `λ_x = n p_x` and
/// `h(y) = Σ_i h_i y^i / i!`.
pub fn expected_bias_poisson(pop: &Population, n: u64, t: f64, est: &LinearEstimator) -> Result<f64> {
    let p = probabilistic(pop)?;
    let support = match &est.rule {
        None => Some(est.coefficients.len() as u64),
        Some(l) => l.support_max(),
    };
    let mut total = CompensatedSum::new();
    for (px, count) in grouped(p) {
        let lambda = n as f64 * px;
        let h_part = weighted_series(est, lambda, support)?;
        let unseen = (-lambda).exp() * -(-t * lambda).exp_m1();
        total.add(count as f64 * (h_part - unseen));
    }
    Ok(total.value())
}

/// `e^{-λ} Σ_i h_i λ^i / i!`, stopping once the terms are negligible.
fn weighted_series(est: &LinearEstimator, lambda: f64, support: Option<u64>) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let ln_lambda = lambda.ln();
    let mut acc = CompensatedSum::new();
    let mut largest = 0.0f64;
    let top = support.unwrap_or(BIAS_SERIES_CAP).min(BIAS_SERIES_CAP);
    for i in 1..=top {
        let h = est.coefficient(i)?;
        let term = if h == 0.0 {
            0.0
        } else {
            let ln_mag = h.abs().ln() + i as f64 * ln_lambda - ln_factorial(i) - lambda;
            h.signum() * ln_mag.exp()
        };
        acc.add(term);
        largest = largest.max(term.abs());
        // terms of the form (cλ)^i/i! peak near i = cλ; only stop well past that
        let past_peak = i as f64 > 2.0 * lambda * est.t.max(1.0) + 20.0;
        if past_peak && term.abs() <= 1e-17 * largest.max(acc.value().abs()) {
            return Ok(acc.value());
        }
        if i == BIAS_SERIES_CAP {
            return Err(Error::NonConvergence { terms: BIAS_SERIES_CAP as usize });
        }
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::sgt_coefficients;
    use crate::smoothing::SmoothingDistribution;

    #[test]
    fn realize_families() {
        assert_eq!(
            PopulationSpec::Uniform { k: 4 }.realize().unwrap(),
            Population::Probabilistic(vec![0.25; 4])
        );
        let Population::Probabilistic(p) = PopulationSpec::TwoStep { k: 4 }.realize().unwrap() else {
            panic!()
        };
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, vec![0.125, 0.125, 0.375, 0.375]);

        let Population::Probabilistic(z) =
            PopulationSpec::Zipf { k: 10_000, s: 1.0, shift: 10.0 }.realize().unwrap()
        else {
            panic!()
        };
        for i in [0usize, 5, 999, 9_999] {
            let ratio = z[i] / z[0];
            assert!((ratio - 11.0 / (i as f64 + 11.0)).abs() < 1e-12);
        }
        assert!(PopulationSpec::TwoStep { k: 3 }.realize().is_err());
        assert!(PopulationSpec::Zipf { k: 3, s: 0.0, shift: 0.0 }.realize().is_err());
        assert!(PopulationSpec::Dirichlet { k: 3, alpha: 0.0, seed: 1 }.realize().is_err());
        assert!(PopulationSpec::Uniform { k: 0 }.realize().is_err());
    }

    #[test]
    fn dirichlet_is_fixed_by_seed() {
        let a = PopulationSpec::Dirichlet { k: 50, alpha: 1.0, seed: 9 }.realize().unwrap();
        let b = PopulationSpec::Dirichlet { k: 50, alpha: 1.0, seed: 9 }.realize().unwrap();
        let c = PopulationSpec::Dirichlet { k: 50, alpha: 1.0, seed: 10 }.realize().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["uniform:100", "twostep:8", "zipf:10:1:10", "dirichlet:5:0.5:3", "urn:4:2", "bernoulli:3:0.25"] {
            let spec: PopulationSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!("zipf:7".parse::<PopulationSpec>().unwrap(), PopulationSpec::Zipf { k: 7, s: 1.0, shift: 0.0 });
        for bad in ["", "uniform", "uniform:x", "zipf:1:2:3:4", "cauchy:3"] {
            assert!(bad.parse::<PopulationSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn single_symbol_multinomial() {
        let pop = PopulationSpec::Uniform { k: 1 }.realize().unwrap();
        let s = sample(&pop, SamplingModel::Multinomial, 5, 5, 1).unwrap();
        assert_eq!(s.old, vec![5]);
        assert_eq!(s.new, vec![5]);
        assert_eq!(true_unseen(&s.old, &s.new), 0);
    }

    #[test]
    fn exhaustive_urn_draw() {
        let pop = Population::urn(vec![1; 30]).unwrap();
        let s = sample(&pop, SamplingModel::Hypergeometric, 12, 18, 4).unwrap();
        for (o, n) in s.old.iter().zip(&s.new) {
            assert_eq!(o + n, 1);
        }
        assert_eq!(s.old.iter().sum::<u64>(), 12);
        assert!(sample(&pop, SamplingModel::Hypergeometric, 12, 19, 4).is_err());
    }

    #[test]
    fn urn_respects_capacities() {
        let caps = vec![3, 1, 7, 2, 5];
        let pop = Population::urn(caps.clone()).unwrap();
        for seed in 0..50 {
            let s = sample(&pop, SamplingModel::Hypergeometric, 9, 6, seed).unwrap();
            for ((o, n), c) in s.old.iter().zip(&s.new).zip(&caps) {
                assert!(o + n <= *c);
            }
        }
    }

    #[test]
    fn model_population_mismatch() {
        let pop = PopulationSpec::Uniform { k: 3 }.realize().unwrap();
        assert!(matches!(
            sample(&pop, SamplingModel::Hypergeometric, 1, 1, 0),
            Err(Error::ModelMismatch(_))
        ));
        assert!(sample(&pop, SamplingModel::BernoulliProduct, 1, 1, 0).is_err());
        let urn = Population::urn(vec![2, 2]).unwrap();
        assert!(sample(&urn, SamplingModel::Poisson, 1, 1, 0).is_err());
    }

    #[test]
    fn multinomial_sizes_are_exact() {
        let pop = PopulationSpec::Zipf { k: 200, s: 1.0, shift: 0.0 }.realize().unwrap();
        for seed in 0..20 {
            let s = sample(&pop, SamplingModel::Multinomial, 137, 250, seed).unwrap();
            assert_eq!(s.old.iter().sum::<u64>(), 137);
            assert_eq!(s.new.iter().sum::<u64>(), 250);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let pop = PopulationSpec::TwoStep { k: 40 }.realize().unwrap();
        for model in [SamplingModel::Multinomial, SamplingModel::Poisson] {
            assert_eq!(sample(&pop, model, 50, 70, 11).unwrap(), sample(&pop, model, 50, 70, 11).unwrap());
        }
    }

    #[test]
    fn nested_path_is_monotone() {
        let pop = PopulationSpec::Uniform { k: 30 }.realize().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let path = sample_path(&pop, SamplingModel::Multinomial, 20, &[0.0, 10.0, 40.0], &mut rng).unwrap();
        assert_eq!(path.new[0].iter().sum::<u64>(), 0);
        assert_eq!(path.new[1].iter().sum::<u64>(), 10);
        assert_eq!(path.new[2].iter().sum::<u64>(), 40);
        for (a, b) in path.new[1].iter().zip(&path.new[2]) {
            assert!(a <= b);
        }
        assert!(sample_path(&pop, SamplingModel::Multinomial, 20, &[5.0, 1.0], &mut rng).is_err());
    }

    #[test]
    fn bernoulli_counts_bounded_by_units() {
        let pop = Population::bernoulli_product(vec![0.5, 1.0, 0.01]).unwrap();
        let s = sample(&pop, SamplingModel::BernoulliProduct, 10, 4, 3).unwrap();
        assert_eq!(s.old[1], 10);
        assert_eq!(s.new[1], 4);
        assert!(s.old.iter().all(|c| *c <= 10));
    }

    #[test]
    fn poisson_old_size_mean() {
        let pop = PopulationSpec::Uniform { k: 100 }.realize().unwrap();
        let trials = 10_000;
        let sizes: Vec<f64> = (0..trials)
            .map(|s| sample(&pop, SamplingModel::Poisson, 100, 100, s).unwrap().old.iter().sum::<u64>() as f64)
            .collect();
        let mean = sizes.iter().sum::<f64>() / trials as f64;
        let var = sizes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
        let se = (var / trials as f64).sqrt();
        assert!((mean - 100.0).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn true_unseen_cases() {
        let count = |w: &str| {
            let mut m = HashMap::new();
            for c in w.chars() {
                *m.entry(c).or_insert(0u64) += 1;
            }
            m
        };
        assert_eq!(true_unseen_map(&count("bananas"), &count("sonatas")), 2);
        assert_eq!(true_unseen_map(&count("bananas"), &count("nab")), 0);
        assert_eq!(true_unseen_map(&HashMap::new(), &count("sonatas")), 5);
        assert_eq!(true_unseen(&[0, 2, 0], &[1, 1, 0]), 1);
    }

    #[test]
    fn expected_unseen_values() {
        let u100 = PopulationSpec::Uniform { k: 100 }.realize().unwrap();
        let want = 100.0 * (-1f64).exp() * (1.0 - (-1f64).exp());
        assert!((expected_unseen_poisson(&u100, 100, 1.0).unwrap() - want).abs() < 1e-12);
        assert!((want - 23.254).abs() < 1e-3);
        assert_eq!(expected_unseen_poisson(&u100, 100, 0.0).unwrap(), 0.0);
        let u10 = PopulationSpec::Uniform { k: 10 }.realize().unwrap();
        assert!(expected_unseen_poisson(&u10, 200, 3.0).unwrap() <= 10.0 * (-20f64).exp());
    }

    #[test]
    fn bias_of_gt_is_zero() {
        for spec in ["uniform:100", "zipf:300:1:10", "twostep:20"] {
            let pop = spec.parse::<PopulationSpec>().unwrap().realize().unwrap();
            for t in [0.5, 1.0, 2.0] {
                let gt = sgt_coefficients(&SmoothingDistribution::Infinite, t, 1).unwrap();
                let b = expected_bias_poisson(&pop, 100, t, &gt).unwrap();
                let scale = expected_unseen_poisson(&pop, 100, t).unwrap();
                assert!(b.abs() <= 1e-10 * scale.max(1.0), "{spec} t={t}: {b}");
            }
        }
    }

    #[test]
    fn bias_of_zero_estimator() {
        let pop = PopulationSpec::Zipf { k: 500, s: 1.0, shift: 0.0 }.realize().unwrap();
        let zero = LinearEstimator::explicit(2.0, vec![]);
        let b = expected_bias_poisson(&pop, 300, 2.0, &zero).unwrap();
        assert_eq!(b, -expected_unseen_poisson(&pop, 300, 2.0).unwrap());
    }

    #[test]
    fn truncated_gt_bias_floor() {
        let (n, ell, t) = (300u64, 2u64, 2.0f64);
        let pop = PopulationSpec::Uniform { k: (n / (ell + 1)) as usize }.realize().unwrap();
        let coeffs = (1..=ell).map(|i| -(-t).powi(i as i32)).collect();
        let est = LinearEstimator::explicit(t, coeffs);
        let gap = -expected_bias_poisson(&pop, n, t, &est).unwrap();
        assert!(gap >= n as f64 * (t - 1.0).powf(2.5) / (6.05 * t));
        // agrees with a Monte-Carlo-free direct evaluation at the single λ = ℓ + 1
        let lambda = (ell + 1) as f64;
        let per_symbol: f64 = (ell + 1..60)
            .map(|i| -(-t).powi(i as i32) * lambda.powi(i as i32) / ln_factorial(i).exp())
            .sum::<f64>()
            * (-lambda).exp();
        assert!((gap - 100.0 * per_symbol).abs() < 1e-9 * gap);
    }
}
