//! Monte-Carlo experiments: NMSE benchmarks, species discovery curves,
//! corpus ingestion and subsampling, and result emission.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_unseen_or_fallback, BaselineKind};
use crate::error::{Error, Result};
use crate::estimators::{estimate_unseen_with_n, good_toulmin, SmoothingScheme};
use crate::exec::{derive_seed, Execution};
use crate::prevalence::PrevalenceHistogram;
use crate::sampling::{sample_path, true_unseen, Population, PopulationSpec, SamplingModel};
use crate::smoothing::SmoothingDistribution;

/// Fraction of failed trials above which a run is abandoned.
pub const FAILURE_THRESHOLD: f64 = 0.10;

/// Anything the harness can evaluate on a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EstimatorId {
    /// Plain Good–Toulmin at every `t`.
    Gt,
    /// Smoothed Good–Toulmin with automatic parameters (plain GT for `t ≤ 1`).
    Sgt(SmoothingScheme),
    Baseline(BaselineKind),
    /// Always predicts half the largest possible count.
    ConstHalf,
    /// Returns the true count; useful as a sanity check.
    Oracle,
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gt => f.write_str("gt"),
            Self::Sgt(s) => f.write_str(s.name()),
            Self::Baseline(b) => write!(f, "{b}"),
            Self::ConstHalf => f.write_str("const-half"),
            Self::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for EstimatorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(Self::Gt),
            "const-half" => Ok(Self::ConstHalf),
            "oracle" => Ok(Self::Oracle),
            _ => match SmoothingScheme::from_name(s) {
                Some(scheme) => Ok(Self::Sgt(scheme)),
                None => s
                    .parse::<BaselineKind>()
                    .map(Self::Baseline)
                    .map_err(|_| Error::parse(format!("unknown estimator `{s}`"))),
            },
        }
    }
}

impl From<EstimatorId> for String {
    fn from(e: EstimatorId) -> Self {
        e.to_string()
    }
}

impl TryFrom<String> for EstimatorId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Inputs an estimator sees on one trial.
struct TrialView<'a> {
    hist: &'a PrevalenceHistogram,
    t: f64,
    /// `n` used for smoothing parameters (sampling units under Bernoulli-product).
    n_param: u64,
    /// Normalizer `n·t` (times `p_S` under Bernoulli-product).
    scale: f64,
    truth: u64,
    clamp: bool,
}

/// Value plus whether a baseline fell back to the first-order jackknife.
fn evaluate(id: EstimatorId, v: &TrialView<'_>) -> Result<(f64, bool)> {
    if v.t == 0.0 {
        return Ok((0.0, false));
    }
    let clamp = |x: f64| {
        if v.clamp {
            x.clamp(0.0, v.t * v.hist.sample_size() as f64)
        } else {
            x
        }
    };
    Ok(match id {
        EstimatorId::Oracle => (v.truth as f64, false),
        EstimatorId::ConstHalf => (v.scale / 2.0, false),
        EstimatorId::Gt => (clamp(good_toulmin(v.hist, v.t)), false),
        EstimatorId::Sgt(scheme) => {
            if v.hist.is_empty() {
                (0.0, false)
            } else {
                (estimate_unseen_with_n(v.hist, v.n_param, v.t, scheme, v.clamp)?.value, false)
            }
        }
        EstimatorId::Baseline(kind) => {
            if v.hist.is_empty() {
                (0.0, false)
            } else {
                let (x, warned) = baseline_unseen_or_fallback(v.hist, v.t, kind)?;
                (clamp(x), warned)
            }
        }
    })
}

/// Full description of a Monte-Carlo NMSE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: SamplingModel,
    pub population: PopulationSpec,
    pub n: u64,
    pub t_grid: Vec<f64>,
    pub estimators: Vec<EstimatorId>,
    pub trials: usize,
    pub seed: u64,
    pub clamp: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() {
            return Err(Error::invalid("t grid is empty"));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid("every t must be finite and > 0"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("no estimators requested"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        Ok(())
    }
}

/// One estimator evaluation on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub t: f64,
    pub estimator: EstimatorId,
    pub estimate: f64,
    pub truth: u64,
    pub squared_error: f64,
    #[serde(skip)]
    pub duration: Duration,
}

/// Aggregated row of the NMSE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseRow {
    pub estimator: String,
    pub model: String,
    pub population: String,
    pub n: u64,
    pub t: f64,
    pub trials: usize,
    pub nmse: f64,
    pub nmse_se: f64,
}

#[derive(Debug, Clone)]
pub struct NmseReport {
    pub config: ExperimentConfig,
    pub rows: Vec<NmseRow>,
    pub records: Vec<TrialRecord>,
    /// Evaluations that errored and were left out of the averages.
    pub failures: usize,
    /// Baseline evaluations that used the jackknife fallback.
    pub fallbacks: usize,
}

/// Outcome of one estimator on one `(trial, t)` pair.
type Outcome = std::result::Result<(f64, bool, Duration), String>;

/// Per-trial results: the truth at each `t` and one outcome per `(t, estimator)`.
struct TrialResult {
    truths: Vec<u64>,
    outcomes: Vec<Vec<Outcome>>,
}

/// Mean squared normalized error for every `(estimator, t)` pair.
///
/// Trial `i` draws its samples from a seed derived from `(seed, i)` alone,
/// so every estimator sees the same samples. Failed evaluations are
/// recorded and skipped; the run aborts if more than 10% of any
/// estimator's evaluations fail.
pub fn run_nmse(config: &ExperimentConfig) -> Result<NmseReport> {
    config.validate()?;
    let pop = config.population.realize_for(config.model)?;
    let p_s = match &pop {
        Population::BernoulliProduct(p) => p.iter().sum(),
        _ => 1.0,
    };
    let order = sorted_order(&config.t_grid);
    let future: Vec<f64> = order.iter().map(|&j| config.t_grid[j] * config.n as f64).collect();

    let run_trial = |trial: usize| -> Result<TrialResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, trial as u64));
        let path = sample_path(&pop, config.model, config.n, &future, &mut rng)?;
        let hist = PrevalenceHistogram::from_counts(path.old.iter().copied());
        let mut truths = vec![0u64; config.t_grid.len()];
        let mut outcomes = vec![Vec::new(); config.t_grid.len()];
        for (slot, &j) in order.iter().enumerate() {
            let t = config.t_grid[j];
            let truth = true_unseen(&path.old, &path.new[slot]);
            truths[j] = truth;
            let view = TrialView {
                hist: &hist,
                t,
                n_param: if config.model == SamplingModel::BernoulliProduct {
                    config.n
                } else {
                    hist.sample_size()
                },
                scale: config.n as f64 * t * p_s,
                truth,
                clamp: config.clamp,
            };
            outcomes[j] = config
                .estimators
                .iter()
                .map(|&id| {
                    let start = Instant::now();
                    evaluate(id, &view).map(|(x, w)| (x, w, start.elapsed())).map_err(|e| e.to_string())
                })
                .collect();
        }
        Ok(TrialResult { truths, outcomes })
    };

    let results: Vec<TrialResult> =
        config.execution.map(config.trials, run_trial).into_iter().collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(config.trials * config.t_grid.len() * config.estimators.len());
    let mut failures_per_estimator = vec![0usize; config.estimators.len()];
    let mut fallbacks = 0usize;
    for (trial, res) in results.iter().enumerate() {
        for (j, &t) in config.t_grid.iter().enumerate() {
            let scale = config.n as f64 * t * p_s;
            for (e, &id) in config.estimators.iter().enumerate() {
                match &res.outcomes[j][e] {
                    Ok((x, warned, dur)) => {
                        fallbacks += usize::from(*warned);
                        let err = (x - res.truths[j] as f64) / scale;
                        records.push(TrialRecord {
                            trial,
                            t,
                            estimator: id,
                            estimate: *x,
                            truth: res.truths[j],
                            squared_error: err * err,
                            duration: *dur,
                        });
                    }
                    Err(_) => failures_per_estimator[e] += 1,
                }
            }
        }
    }
    enforce_failure_threshold(&failures_per_estimator, config.trials * config.t_grid.len())?;

    let mut rows = Vec::new();
    for &id in &config.estimators {
        for &j in &order {
            let t = config.t_grid[j];
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.estimator == id && r.t.to_bits() == t.to_bits())
                .map(|r| r.squared_error)
                .collect();
            let (mean, se) = mean_and_se(&errs);
            rows.push(NmseRow {
                estimator: id.to_string(),
                model: config.model.to_string(),
                population: config.population.to_string(),
                n: config.n,
                t,
                trials: errs.len(),
                nmse: mean,
                nmse_se: se,
            });
        }
    }
    Ok(NmseReport {
        config: config.clone(),
        rows,
        records,
        failures: failures_per_estimator.iter().sum(),
        fallbacks,
    })
}

/// Abort when any estimator failed on more than [`FAILURE_THRESHOLD`] of
/// its `per_estimator` evaluations.
pub fn enforce_failure_threshold(failures: &[usize], per_estimator: usize) -> Result<()> {
    for &failed in failures {
        if failed as f64 > FAILURE_THRESHOLD * per_estimator as f64 {
            return Err(Error::TooManyFailures { failed, total: per_estimator });
        }
    }
    Ok(())
}

fn sorted_order(ts: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ts.len()).collect();
    idx.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]).then(a.cmp(&b)));
    idx
}

/// Sample mean and standard error of the mean (NaN when undefined).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let (mean, sd) = mean_and_sd(xs);
    (mean, sd / (xs.len() as f64).sqrt())
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = crate::numeric::compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = crate::numeric::compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Tokenized text: vocabulary, per-word counts and the token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    vocabulary: Vec<String>,
    counts: Vec<u64>,
    tokens: Vec<u32>,
}

impl Corpus {
    /// Corpus from per-symbol counts only; token order follows the symbols.
    pub fn from_counts<I: IntoIterator<Item = (String, u64)>>(counts: I) -> Self {
        let mut vocabulary = Vec::new();
        let mut tally = Vec::new();
        let mut tokens = Vec::new();
        for (sym, c) in counts.into_iter().filter(|(_, c)| *c > 0) {
            let id = vocabulary.len() as u32;
            vocabulary.push(sym);
            tally.push(c);
            tokens.extend(std::iter::repeat(id).take(c as usize));
        }
        Self { vocabulary, counts: tally, tokens }
    }

    pub fn total(&self) -> u64 {
        self.tokens.len() as u64
    }

    pub fn distinct(&self) -> u64 {
        self.vocabulary.len() as u64
    }

    /// Per-word counts, sorted by word.
    pub fn counts(&self) -> BTreeMap<&str, u64> {
        self.vocabulary.iter().map(String::as_str).zip(self.counts.iter().copied()).collect()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(|&i| self.vocabulary[i as usize].as_str())
    }

    pub fn histogram(&self) -> PrevalenceHistogram {
        PrevalenceHistogram::from_counts(self.counts.iter().copied())
    }
}

/// Split UTF-8 text into maximal runs of alphanumeric characters,
/// optionally lowercased, keeping the token order.
pub fn ingest_corpus(text: &[u8], lowercase: bool) -> Result<Corpus> {
    let text = std::str::from_utf8(text)?;
    let mut index: std::collections::HashMap<String, u32> = std::collections::HashMap::new();
    let mut corpus = Corpus { vocabulary: Vec::new(), counts: Vec::new(), tokens: Vec::new() };
    for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        let word = if lowercase { word.to_lowercase() } else { word.to_string() };
        let id = match index.get(&word) {
            Some(&id) => id,
            None => {
                let id = corpus.vocabulary.len() as u32;
                index.insert(word.clone(), id);
                corpus.vocabulary.push(word);
                corpus.counts.push(0);
                id
            }
        };
        corpus.counts[id as usize] += 1;
        corpus.tokens.push(id);
    }
    Ok(corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsampleMode {
    /// A uniformly random subset of the tokens.
    WithoutReplacement,
    /// The first `n` tokens in reading order.
    Consecutive,
}

impl SubsampleMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::WithoutReplacement => "without-replacement",
            Self::Consecutive => "consecutive",
        }
    }
}

/// Observed part and held-out remainder, as per-word counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsample<'a> {
    pub observed: BTreeMap<&'a str, u64>,
    pub remainder: BTreeMap<&'a str, u64>,
}

/// Take `n` tokens from the corpus and return them with the rest.
pub fn subsample(corpus: &Corpus, n: u64, mode: SubsampleMode, seed: u64) -> Result<Subsample<'_>> {
    let (old, rest) = split_counts(corpus, n, mode, seed)?;
    let to_map = |v: &[u64]| {
        corpus
            .vocabulary
            .iter()
            .zip(v)
            .filter(|(_, c)| **c > 0)
            .map(|(w, c)| (w.as_str(), *c))
            .collect::<BTreeMap<_, _>>()
    };
    Ok(Subsample { observed: to_map(&old), remainder: to_map(&rest) })
}

fn split_counts(corpus: &Corpus, n: u64, mode: SubsampleMode, seed: u64) -> Result<(Vec<u64>, Vec<u64>)> {
    if n > corpus.total() {
        return Err(Error::SampleTooLarge { requested: n, available: corpus.total() });
    }
    let old = match mode {
        SubsampleMode::Consecutive => {
            let mut old = vec![0u64; corpus.counts.len()];
            for &id in &corpus.tokens[..n as usize] {
                old[id as usize] += 1;
            }
            old
        }
        SubsampleMode::WithoutReplacement => {
            if corpus.counts.is_empty() {
                Vec::new()
            } else {
                let urn = Population::urn(corpus.counts.clone())?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sample_path(&urn, SamplingModel::Hypergeometric, n, &[], &mut rng)?.old
            }
        }
    };
    let rest = corpus.counts.iter().zip(&old).map(|(c, o)| c - o).collect();
    Ok((old, rest))
}

/// Where a discovery curve's samples come from.
#[derive(Debug, Clone)]
pub enum CurveSource {
    /// Fresh samples from a population on every trial.
    Synthetic { population: PopulationSpec, model: SamplingModel, n: u64 },
    /// Subsamples of a fixed corpus, validated against the held-out tokens.
    Data { corpus: Corpus, label: String, n: u64, mode: SubsampleMode },
}

#[derive(Debug, Clone)]
pub struct CurveConfig {
    pub source: CurveSource,
    pub t_grid: Vec<f64>,
    pub estimators: Vec<EstimatorId>,
    pub trials: usize,
    pub seed: u64,
    pub clamp: bool,
    pub execution: Execution,
}

/// One point of a species discovery curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub estimator: String,
    pub t: f64,
    /// Mean over trials of observed distinct plus predicted new species.
    pub mean_prediction: f64,
    pub stddev: f64,
    /// Mean over trials of the actual distinct count at `t`; `None` when
    /// there is not enough held-out data to check.
    pub true_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveEcho {
    pub source: String,
    pub model: String,
    pub n: u64,
    pub t_grid: Vec<f64>,
    pub estimators: Vec<EstimatorId>,
    pub trials: usize,
    pub seed: u64,
    pub clamp: bool,
}

#[derive(Debug, Clone)]
pub struct CurveReport {
    pub echo: CurveEcho,
    pub rows: Vec<CurveRow>,
    /// Mean absolute deviation from the truth over validatable `t`, per estimator.
    pub mean_abs_error: Vec<(String, Option<f64>)>,
    pub failures: usize,
}

/// Predicted cumulative distinct-species counts as a function of `t`.
pub fn discovery_curve(config: &CurveConfig) -> Result<CurveReport> {
    if config.t_grid.is_empty() || config.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("t grid must be nonempty with finite t >= 0"));
    }
    if config.trials == 0 || config.estimators.is_empty() {
        return Err(Error::invalid("need at least one trial and one estimator"));
    }
    let order = sorted_order(&config.t_grid);
    let (n, pop, model, validatable): (u64, Population, SamplingModel, Vec<bool>) = match &config.source {
        CurveSource::Synthetic { population, model, n } => {
            (*n, population.realize_for(*model)?, *model, vec![true; config.t_grid.len()])
        }
        CurveSource::Data { corpus, n, .. } => {
            if *n == 0 || *n > corpus.total() {
                return Err(Error::SampleTooLarge { requested: *n, available: corpus.total() });
            }
            let room = (corpus.total() - n) as f64 / *n as f64;
            let ok = config.t_grid.iter().map(|t| *t <= room * (1.0 + 1e-12)).collect();
            (*n, Population::urn(corpus.counts.clone())?, SamplingModel::Hypergeometric, ok)
        }
    };
    // future sizes only for the t values that can be checked
    let checked: Vec<usize> = order.iter().copied().filter(|&j| validatable[j]).collect();
    let future: Vec<f64> = checked.iter().map(|&j| (config.t_grid[j] * n as f64).round()).collect();
    let p_s = match &pop {
        Population::BernoulliProduct(p) => p.iter().sum(),
        _ => 1.0,
    };

    let run_trial = |trial: usize| -> Result<(Vec<Option<f64>>, Vec<Vec<Option<f64>>>)> {
        let seed = derive_seed(config.seed, 1, trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (old, news) = match &config.source {
            CurveSource::Data { corpus, mode: SubsampleMode::Consecutive, .. } => {
                consecutive_path(corpus, n, &future)
            }
            _ => {
                let path = sample_path(&pop, model, n, &future, &mut rng)?;
                (path.old, path.new)
            }
        };
        let hist = PrevalenceHistogram::from_counts(old.iter().copied());
        let observed = hist.observed_count() as f64;
        let mut truths = vec![None; config.t_grid.len()];
        for (slot, &j) in checked.iter().enumerate() {
            truths[j] = Some(observed + true_unseen(&old, &news[slot]) as f64);
        }
        let mut preds = vec![vec![None; config.t_grid.len()]; config.estimators.len()];
        for (j, &t) in config.t_grid.iter().enumerate() {
            let view = TrialView {
                hist: &hist,
                t,
                n_param: if model == SamplingModel::BernoulliProduct { n } else { hist.sample_size() },
                scale: n as f64 * t * p_s,
                truth: truths[j].map_or(0, |v| (v - observed) as u64),
                clamp: config.clamp,
            };
            for (e, &id) in config.estimators.iter().enumerate() {
                if id == EstimatorId::Oracle && truths[j].is_none() {
                    continue;
                }
                preds[e][j] = evaluate(id, &view).ok().map(|(x, _)| observed + x);
            }
        }
        Ok((truths, preds))
    };
    let results: Vec<_> = config.execution.map(config.trials, run_trial).into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut mean_abs_error = Vec::new();
    let mut failures = 0usize;
    for (e, &id) in config.estimators.iter().enumerate() {
        let mut abs_errs = Vec::new();
        for &j in &order {
            if id == EstimatorId::Oracle && !validatable[j] {
                continue;
            }
            let preds: Vec<f64> = results.iter().filter_map(|(_, p)| p[e][j]).collect();
            failures += config.trials - preds.len();
            let (mean, sd) = mean_and_sd(&preds);
            let truth = if validatable[j] {
                let ts: Vec<f64> = results.iter().filter_map(|(tr, _)| tr[j]).collect();
                Some(mean_and_sd(&ts).0)
            } else {
                None
            };
            if validatable[j] {
                let errs: Vec<f64> = results
                    .iter()
                    .filter_map(|(tr, p)| Some((p[e][j]? - tr[j]?).abs()))
                    .collect();
                abs_errs.push(mean_and_sd(&errs).0);
            }
            rows.push(CurveRow { estimator: id.to_string(), t: config.t_grid[j], mean_prediction: mean, stddev: sd, true_value: truth });
        }
        let mae = (!abs_errs.is_empty()).then(|| abs_errs.iter().sum::<f64>() / abs_errs.len() as f64);
        mean_abs_error.push((id.to_string(), mae));
    }
    let (source, model_name, mode_note) = match &config.source {
        CurveSource::Synthetic { population, model, .. } => (population.to_string(), model.to_string(), None),
        CurveSource::Data { label, mode, .. } => (label.clone(), "data".to_string(), Some(mode.name())),
    };
    let echo = CurveEcho {
        source: match mode_note {
            Some(m) => format!("{source} ({m})"),
            None => source,
        },
        model: model_name,
        n,
        t_grid: config.t_grid.clone(),
        estimators: config.estimators.clone(),
        trials: config.trials,
        seed: config.seed,
        clamp: config.clamp,
    };
    Ok(CurveReport { echo, rows, mean_abs_error, failures })
}

fn consecutive_path(corpus: &Corpus, n: u64, future: &[f64]) -> (Vec<u64>, Vec<Vec<u64>>) {
    let k = corpus.counts.len();
    let mut old = vec![0u64; k];
    for &id in &corpus.tokens[..n as usize] {
        old[id as usize] += 1;
    }
    let mut cum = vec![0u64; k];
    let mut pos = n as usize;
    let mut news = Vec::with_capacity(future.len());
    for m in future {
        let end = n as usize + *m as usize;
        for &id in &corpus.tokens[pos..end] {
            cum[id as usize] += 1;
        }
        pos = end;
        news.push(cum.clone());
    }
    (old, news)
}

/// Output encodings for result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Float text with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub const NMSE_COLUMNS: [&str; 8] = ["estimator", "model", "population", "n", "t", "trials", "nmse", "nmse_se"];
pub const CURVE_COLUMNS: [&str; 5] = ["estimator", "t", "mean_prediction", "stddev", "true_value"];

/// Version tag stored in every JSON `config` block.
pub const FORMAT_VERSION: &str = concat!("unseen-", env!("CARGO_PKG_VERSION"));

#[derive(Serialize)]
struct JsonDoc<'a, C: Serialize, R: Serialize> {
    config: Versioned<'a, C>,
    rows: &'a [R],
}

#[derive(Serialize)]
struct Versioned<'a, C: Serialize> {
    version: &'static str,
    #[serde(flatten)]
    inner: &'a C,
}

fn write_json<W: Write, C: Serialize, R: Serialize>(mut w: W, config: &C, rows: &[R]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("refusing to emit an empty table"));
    }
    let doc = JsonDoc { config: Versioned { version: FORMAT_VERSION, inner: config }, rows };
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_csv<W: Write>(w: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(header)?;
    let mut any = false;
    for r in rows {
        wtr.write_record(&r)?;
        any = true;
    }
    if !any {
        return Err(Error::invalid("refusing to emit an empty table"));
    }
    wtr.flush()?;
    Ok(())
}

/// Write an NMSE table as CSV or JSON.
pub fn emit_nmse<W: Write>(report: &NmseReport, format: Format, w: W) -> Result<()> {
    match format {
        Format::Json => write_json(w, &report.config, &report.rows),
        Format::Csv => write_csv(
            w,
            &NMSE_COLUMNS,
            report.rows.iter().map(|r| {
                vec![
                    r.estimator.clone(),
                    r.model.clone(),
                    r.population.clone(),
                    r.n.to_string(),
                    format_float(r.t),
                    r.trials.to_string(),
                    format_float(r.nmse),
                    format_float(r.nmse_se),
                ]
            }),
        ),
    }
}

/// Write a discovery-curve table as CSV or JSON.
pub fn emit_curve<W: Write>(report: &CurveReport, format: Format, w: W) -> Result<()> {
    match format {
        Format::Json => write_json(w, &report.echo, &report.rows),
        Format::Csv => write_csv(
            w,
            &CURVE_COLUMNS,
            report.rows.iter().map(|r| {
                vec![
                    r.estimator.clone(),
                    format_float(r.t),
                    format_float(r.mean_prediction),
                    format_float(r.stddev),
                    r.true_value.map(format_float).unwrap_or_default(),
                ]
            }),
        ),
    }
}

/// Parse an NMSE CSV produced by [`emit_nmse`].
pub fn read_nmse_csv<R: std::io::Read>(r: R) -> Result<Vec<NmseRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(NMSE_COLUMNS) {
        return Err(Error::parse("unexpected NMSE header"));
    }
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Parse a curve CSV produced by [`emit_curve`]; empty `true_value` reads as `None`.
pub fn read_curve_csv<R: std::io::Read>(r: R) -> Result<Vec<CurveRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CURVE_COLUMNS) {
        return Err(Error::parse("unexpected curve header"));
    }
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Path helper for callers writing to files.
pub fn create_output(path: &PathBuf) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// How the headline estimate is formed.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimaryRule {
    Gt,
    Scheme(SmoothingScheme),
    /// Smoothed GT with a caller-supplied smoothing law.
    Custom(SmoothingDistribution),
}

impl PrimaryRule {
    pub fn name(&self) -> String {
        match self {
            Self::Gt => "gt".into(),
            Self::Scheme(s) => s.name().into(),
            Self::Custom(_) => "custom".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateEntry {
    pub estimator: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Result of estimating on one histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub version: &'static str,
    pub t: f64,
    pub sample_size: u64,
    pub observed: u64,
    pub clamp: bool,
    pub estimates: Vec<EstimateEntry>,
}

impl EstimateReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.estimates {
            out.push_str(&format!("{}\t{}\n", e.estimator, e.value));
        }
        out
    }

    pub fn warnings(&self) -> impl Iterator<Item = String> + '_ {
        self.estimates.iter().filter_map(|e| e.note.as_ref().map(|n| format!("{}: {n}", e.estimator)))
    }
}

/// Headline estimate plus any baselines on one histogram.
///
/// Unlike [`estimate_unseen`](crate::estimators::estimate_unseen), a
/// smoothing scheme outside its valid range of `t` is an error here
/// rather than a silent switch to plain GT.
pub fn estimate_report(
    hist: &PrevalenceHistogram,
    t: f64,
    rule: &PrimaryRule,
    clamp: bool,
    baselines: &[BaselineKind],
) -> Result<EstimateReport> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("t must be finite and > 0, got {t}")));
    }
    if let PrimaryRule::Scheme(s) = rule {
        if !s.accepts(t) {
            return Err(Error::SmoothingUndefined { t });
        }
    }
    let empty_note = || Some("empty histogram; nothing observed".to_string());
    let limit = t * hist.sample_size() as f64;
    let clamp_value = |x: f64| if clamp { x.clamp(0.0, limit) } else { x };
    let mut estimates = Vec::with_capacity(1 + baselines.len());
    let headline = if hist.is_empty() {
        EstimateEntry { estimator: rule.name(), value: 0.0, note: empty_note() }
    } else {
        let value = match rule {
            PrimaryRule::Gt => clamp_value(good_toulmin(hist, t)),
            PrimaryRule::Scheme(s) => estimate_unseen_with_n(hist, hist.sample_size(), t, *s, clamp)?.value,
            PrimaryRule::Custom(l) => clamp_value(crate::estimators::sgt_estimate(hist, l, t)?),
        };
        EstimateEntry { estimator: rule.name(), value, note: None }
    };
    estimates.push(headline);
    for &kind in baselines {
        estimates.push(if hist.is_empty() {
            EstimateEntry { estimator: kind.to_string(), value: 0.0, note: empty_note() }
        } else {
            let (value, warned) = baseline_unseen_or_fallback(hist, t, kind)?;
            EstimateEntry {
                estimator: kind.to_string(),
                value: clamp_value(value),
                note: warned.then(|| "coverage undefined; used first-order jackknife".to_string()),
            }
        });
    }
    Ok(EstimateReport {
        version: FORMAT_VERSION,
        t,
        sample_size: hist.sample_size(),
        observed: hist.observed_count(),
        clamp,
        estimates,
    })
}

/// One simulated draw of an observed and a future sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub version: &'static str,
    pub population: String,
    pub model: String,
    pub n: u64,
    pub m: u64,
    pub seed: u64,
    pub sample_size: u64,
    pub observed: u64,
    pub unseen: u64,
    pub histogram: PrevalenceHistogram,
}

/// Draw one `(old, new)` pair and report the observed histogram and the
/// true number of new species.
pub fn simulate(population: &PopulationSpec, model: SamplingModel, n: u64, m: u64, seed: u64) -> Result<SimulationReport> {
    let pop = population.realize_for(model)?;
    let pair = crate::sampling::sample(&pop, model, n, m, seed)?;
    let histogram = PrevalenceHistogram::from_counts(pair.old.iter().copied());
    Ok(SimulationReport {
        version: FORMAT_VERSION,
        population: population.to_string(),
        model: model.to_string(),
        n,
        m,
        seed,
        sample_size: histogram.sample_size(),
        observed: histogram.observed_count(),
        unseen: true_unseen(&pair.old, &pair.new),
        histogram,
    })
}

/// Serialize any report as pretty JSON followed by a newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Per-word counts as `symbol,count` CSV, sorted by symbol.
pub fn write_counts_csv<W: Write>(corpus: &Corpus, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["symbol", "count"])?;
    for (sym, c) in corpus.counts() {
        wtr.write_record([sym, &c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a `symbol,count` CSV into a corpus (token order follows the rows).
pub fn read_counts_csv<R: std::io::Read>(r: R) -> Result<Corpus> {
    #[derive(Deserialize)]
    struct Row {
        symbol: String,
        count: u64,
    }
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().ne(["symbol", "count"]) {
        return Err(Error::parse("expected header `symbol,count`"));
    }
    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        if !seen.insert(row.symbol.clone()) {
            return Err(Error::parse(format!("duplicate symbol `{}`", row.symbol)));
        }
        rows.push((row.symbol, row.count));
    }
    Ok(Corpus::from_counts(rows))
}
