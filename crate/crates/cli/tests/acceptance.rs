//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The process fails if any
//! criterion fails, except those listed in `UNATTAINABLE`, whose literal
//! statement is contradicted by an exact calculation; for those the
//! corrected claim must hold instead.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unseen_core::estimators::{good_toulmin, sgt_coefficients, sgt_estimate, truncated_gt};
use unseen_core::exec::Execution;
use unseen_core::harness::{
    discovery_curve, ingest_corpus, run_nmse, CurveConfig, CurveSource, EstimatorId, ExperimentConfig, SubsampleMode,
};
use unseen_core::oracles::{
    bias_integral_laws, check_bias_integral, check_hyper_identity, check_hyper_limit, check_unbiasedness_gt,
    hyper_identity_laws, laguerre_envelope_excess, truncated_gt_floor, BIAS_INTEGRAL_YS, HYPER_IDENTITY_TOL, HYPER_YS,
    LAGUERRE_TOL,
};
use unseen_core::prevalence::PrevalenceHistogram;
use unseen_core::sampling::{Population, PopulationSpec, SamplingModel};
use unseen_core::smoothing::SmoothingDistribution;

/// Criteria whose literal claim cannot hold, with the reason.
const UNATTAINABLE: [(u32, &str); 1] = [(
    9,
    "nt/2 has NMSE 1/4 only on a worst-case population; on Uniform(100), n=100, t=2 under Poisson sampling the exact value is 0.1168",
)];

struct Outcome {
    pass: bool,
    detail: String,
    /// For unattainable criteria: whether the corrected claim holds.
    corrected: Option<bool>,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into(), corrected: None }
}

fn hist(pairs: &[(u64, u64)]) -> PrevalenceHistogram {
    PrevalenceHistogram::from_pairs(pairs.iter().copied()).unwrap()
}

fn corbet() -> PrevalenceHistogram {
    let phi = [118, 74, 44, 24, 29, 22, 20, 19, 20, 15, 12, 14, 6, 12, 6];
    hist(&phi.iter().enumerate().map(|(i, &p)| (i as u64 + 1, p)).collect::<Vec<_>>())
}

fn c1() -> Outcome {
    let v = good_toulmin(&corbet(), 1.0);
    outcome(v == 75.0, format!("GT on the butterfly table at t=1 gives {v}"))
}

/// Coefficient `-(-t)^i P(Bin(k, 1/(1+t)) ≥ i)` written out as a sum of
/// `C(k,j) t^(k-j) / (1+t)^k`.
fn efron_thisted(k: u64, t: f64, i: u64) -> f64 {
    if i > k {
        return 0.0;
    }
    let mut c = 1.0f64;
    let mut terms = vec![0.0; k as usize + 1];
    for j in 0..=k {
        terms[j as usize] = c * t.powi((k - j) as i32);
        c = c * (k - j) as f64 / (j + 1) as f64;
    }
    let tail: f64 = terms[i as usize..].iter().sum::<f64>() / (1.0 + t).powi(k as i32);
    -(-t).powi(i as i32) * tail
}

fn c2() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..=40u64 {
        for t in [1.0, 2.0, 5.0, 10.0] {
            let l = SmoothingDistribution::binomial(k, 1.0 / (1.0 + t)).unwrap();
            let est = sgt_coefficients(&l, t, 60).unwrap();
            for i in 1..=60u64 {
                let want = efron_thisted(k, t, i);
                let got = est.coefficient(i).unwrap();
                worst = worst.max((got - want).abs() / want.abs().max(1.0));
            }
        }
    }
    outcome(worst <= 1e-12, format!("max scaled gap {worst:.2e} over k<=40, i<=60, t in {{1,2,5,10}} (tol 1e-12)"))
}

fn ln_fact(n: u64) -> f64 {
    (2..=n).map(|x| (x as f64).ln()).sum()
}

fn c3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let top = rng.random_range(1..=30u64);
        let mut pairs: Vec<(u64, u64)> = Vec::new();
        for i in 1..top {
            if rng.random_bool(0.5) {
                pairs.push((i, rng.random_range(1..50)));
            }
        }
        pairs.push((top, rng.random_range(1..50)));
        let h = hist(&pairs);
        let t = [1.0, 2.0, 5.0][case % 3];
        let (l, pmf): (SmoothingDistribution, Box<dyn Fn(u64) -> f64>) = if case % 2 == 0 {
            let r = rng.random_range(0.0..=5.0f64);
            let pmf = move |ell: u64| {
                if r == 0.0 {
                    f64::from(u8::from(ell == 0))
                } else {
                    (-r + ell as f64 * r.ln() - ln_fact(ell)).exp()
                }
            };
            (SmoothingDistribution::poisson(r).unwrap(), Box::new(pmf))
        } else {
            let k = rng.random_range(0..=20u64);
            let q: f64 = rng.random_range(0.0..=2.0 / (2.0 + t));
            let pmf = move |ell: u64| {
                if ell > k {
                    return 0.0;
                }
                let c = (ln_fact(k) - ln_fact(ell) - ln_fact(k - ell)).exp();
                c * q.powi(ell as i32) * (1.0 - q).powi((k - ell) as i32)
            };
            (SmoothingDistribution::binomial(k, q).unwrap(), Box::new(pmf))
        };
        let mut direct = 0.0;
        for ell in 0..top {
            direct += pmf(ell) * truncated_gt(&h, t, ell);
        }
        // every ℓ ≥ top gives full GT; sum that weight upward from the small end
        let mut rest = 0.0;
        for ell in (top..top + 400).rev() {
            rest += pmf(ell);
        }
        direct += rest * good_toulmin(&h, t);
        let got = sgt_estimate(&h, &l, t).unwrap();
        worst = worst.max((got - direct).abs() / got.abs().max(1.0));
    }
    outcome(worst <= 1e-9, format!("max relative gap {worst:.2e} on 100 random histograms (tol 1e-9)"))
}

fn c4() -> Outcome {
    let pop = Population::probabilistic(vec![0.01; 100]).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for t in [0.5, 2.0] {
        let r = check_unbiasedness_gt(&pop, 100, t, 100_000, 41, Execution::Parallel).unwrap();
        pass &= r.pass;
        parts.push(format!("t={t}: |mean|={:.3e} <= 3SE={:.3e}", r.deviation, r.tolerance));
    }
    outcome(pass, format!("GT bias under Poisson sampling, 1e5 trials; {}", parts.join("; ")))
}

fn nmse_config(model: SamplingModel, k: usize, n: u64, t: f64, estimators: &[&str], trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        model,
        population: PopulationSpec::Uniform { k },
        n,
        t_grid: vec![t],
        estimators: estimators.iter().map(|s| s.parse::<EstimatorId>().unwrap()).collect(),
        trials,
        seed,
        clamp: false,
        execution: Execution::Parallel,
    }
}

fn c5() -> Outcome {
    let n = 10_000u64;
    let t = 2.0f64;
    let poisson_cap = 3.0 / (n as f64).powf(1.0 / t);
    let binom_cap = 6.0 / (n as f64 * t).powf((1.0 + 2.0 / t).ln() / 3f64.ln());
    let mut pass = true;
    let mut parts = Vec::new();
    for model in [SamplingModel::Multinomial, SamplingModel::Poisson] {
        let r = run_nmse(&nmse_config(model, 10_000, n, t, &["poisson", "binomial-opt"], 1_000, 5)).unwrap();
        let (p, b) = (r.rows[0].nmse, r.rows[1].nmse);
        pass &= p <= poisson_cap && b <= binom_cap;
        parts.push(format!("{model}: poisson {p:.2e} (cap {poisson_cap:.3}), binomial-opt {b:.2e} (cap {binom_cap:.4})"));
    }
    outcome(pass, format!("Uniform(1e4), n=1e4, t=2, 1e3 trials; {}", parts.join("; ")))
}

fn c6() -> Outcome {
    let nmse = |n| run_nmse(&nmse_config(SamplingModel::Poisson, 2, n, 2.0, &["gt"], 100_000, 6)).unwrap().rows[0].nmse;
    let (a, b) = (nmse(20), nmse(40));
    outcome(b >= 2.0 * a, format!("two symbols, t=2: NMSE {a:.3e} at n=20, {b:.3e} at n=40, ratio {:.1}", b / a))
}

fn c7() -> Outcome {
    let mut tightest = f64::INFINITY;
    let mut pass = true;
    for ell in [2, 4] {
        for t in [1.5, 2.0, 3.0] {
            for n in [300, 3000] {
                let (bias, floor) = truncated_gt_floor(n, t, ell).unwrap();
                pass &= bias > floor;
                tightest = tightest.min(bias / floor);
            }
        }
    }
    outcome(pass, format!("smallest bias/floor ratio {tightest:.3} over 12 cases (must exceed 1)"))
}

fn c8() -> Outcome {
    let mut bias_worst = 0.0f64;
    for l in bias_integral_laws() {
        for y in BIAS_INTEGRAL_YS {
            bias_worst = bias_worst.max(check_bias_integral(&l, y).unwrap());
        }
    }
    let mut hyper_worst = 0.0f64;
    for l in hyper_identity_laws() {
        for k in 1..=20 {
            for y in HYPER_YS {
                hyper_worst = hyper_worst.max(check_hyper_identity(&l, k, y).unwrap());
            }
            hyper_worst = hyper_worst.max(check_hyper_limit(&l, k).unwrap());
        }
    }
    let lag = laguerre_envelope_excess(10_000, 200, 50.0, 8);
    outcome(
        bias_worst <= 1e-8 && hyper_worst <= HYPER_IDENTITY_TOL && lag <= LAGUERRE_TOL,
        format!("bias integral {bias_worst:.2e} (tol 1e-8), hyper identity {hyper_worst:.2e} (tol 1e-9), Laguerre excess {:.2e}", lag.max(0.0)),
    )
}

/// Exact NMSE of the constant `nt/2` predictor on Uniform(k), Poisson model.
fn const_half_exact(k: f64, n: f64, t: f64) -> f64 {
    let lambda = n / k;
    let p = (-lambda).exp() * -(-t * lambda).exp_m1();
    let (mean, var) = (k * p, k * p * (1.0 - p));
    (var + (n * t / 2.0 - mean).powi(2)) / (n * t).powi(2)
}

fn c9() -> Outcome {
    let r = run_nmse(&nmse_config(SamplingModel::Poisson, 100, 100, 2.0, &["const-half"], 10_000, 9)).unwrap();
    let row = &r.rows[0];
    let literal = (row.nmse - 0.25).abs() <= 3.0 * row.nmse_se;
    let exact = const_half_exact(100.0, 100.0, 2.0);
    let matches_exact = (row.nmse - exact).abs() <= 3.0 * row.nmse_se;
    // on a single symbol nothing new ever appears and the error is exactly nt/2
    let worst = run_nmse(&nmse_config(SamplingModel::Poisson, 1, 100, 2.0, &["const-half"], 1_000, 9)).unwrap().rows[0].nmse;
    Outcome {
        pass: literal,
        detail: format!(
            "empirical {:.4} +/- {:.1e} vs claimed 0.25; exact value for this population {exact:.4}; single-symbol population gives {worst}",
            row.nmse, row.nmse_se
        ),
        corrected: Some(matches_exact && worst == 0.25),
    }
}

fn c10() -> Outcome {
    let corpus = ingest_corpus(include_bytes!("../../core/data/hamlet.txt"), true).unwrap();
    let (total, distinct) = (corpus.total(), corpus.distinct());
    let n = (0.2 * total as f64).round() as u64;
    let full = (total - n) as f64 / n as f64;
    let mut t_grid: Vec<f64> = (1..=7).map(|j| j as f64 * 0.5).collect();
    t_grid.push(full);
    let cfg = CurveConfig {
        source: CurveSource::Data { corpus, label: "hamlet".into(), n, mode: SubsampleMode::WithoutReplacement },
        t_grid,
        estimators: vec!["binomial-opt".parse().unwrap(), "jackknife1".parse().unwrap()],
        trials: 100,
        seed: 10,
        clamp: true,
        execution: Execution::Parallel,
    };
    let report = discovery_curve(&cfg).unwrap();
    let at_full = report.rows.iter().find(|r| r.estimator == "binomial-opt" && r.t == full).unwrap();
    let rel = (at_full.mean_prediction - distinct as f64).abs() / distinct as f64;
    let mae = |name: &str| report.mean_abs_error.iter().find(|(e, _)| e == name).unwrap().1.unwrap();
    let (sgt, jk) = (mae("binomial-opt"), mae("jackknife1"));
    outcome(
        rel <= 0.15 && sgt < jk && at_full.true_value == Some(distinct as f64),
        format!(
            "fixture {total} tokens / {distinct} distinct, n={n}: predicted {:.0} ({:.1}% off); MAE binomial-opt {sgt:.1} vs jackknife+SCL {jk:.1}",
            at_full.mean_prediction,
            100.0 * rel
        ),
    )
}

fn c11() -> Outcome {
    let args = [
        "nmse", "--pop", "zipf:2000:1", "--model", "multinomial", "--n", "1000", "--t", "0.5,1,2,5", "--estimator",
        "gt,poisson,binomial-opt,binomial-et,chao-lee,ace,jackknife2,const-half", "--trials", "200", "--seed", "11",
    ];
    let run = |before: &[&str], after: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_unseen"))
            .args(before)
            .args(args)
            .args(after)
            .env_remove("UNSEEN_THREADS")
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    let base = run(&[], &[]);
    let variants = [run(&[], &[]), run(&["--threads", "1"], &[]), run(&["--threads", "4"], &[]), run(&[], &["--sequential"])];
    let same = variants.iter().all(|v| *v == base);
    outcome(same && !base.is_empty(), format!("{} runs (default, 1 and 4 threads, sequential) byte-identical: {same}", variants.len() + 1))
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Duration); 11] = [
        (1, "Corbet exactness", c1, Duration::from_millis(1)),
        (2, "ET equivalence", c2, Duration::from_secs(1)),
        (3, "mixture identity", c3, Duration::from_secs(5)),
        (4, "GT unbiasedness", c4, Duration::from_secs(30)),
        (5, "rate check at desk scale", c5, Duration::from_secs(300)),
        (6, "GT divergence", c6, Duration::from_secs(60)),
        (7, "truncated-GT bias floor", c7, Duration::from_secs(1)),
        (8, "identity oracles", c8, Duration::from_secs(60)),
        (9, "trivial-estimator calibration", c9, Duration::from_secs(30)),
        (10, "Hamlet discovery curve", c10, Duration::from_secs(300)),
        (11, "determinism", c11, Duration::from_secs(60)),
    ];
    let mut unexpected = 0;
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = o.pass && in_time;
        println!(
            "criterion {id:>2} {} {name}: {} [{:.3} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        );
        if pass {
            continue;
        }
        failed += 1;
        match UNATTAINABLE.iter().find(|(u, _)| *u == id) {
            Some((_, why)) if in_time && o.corrected == Some(true) => {
                println!("             documented: {why}; the corrected claim holds");
            }
            _ => unexpected += 1,
        }
    }
    println!("acceptance: {} passed, {failed} failed, {unexpected} unexpected", 11 - failed);
    if unexpected > 0 {
        std::process::exit(1);
    }
}
