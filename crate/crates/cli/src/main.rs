//! `unseen`: estimate how many new species a larger sample would reveal,
//! and benchmark the estimators by simulation.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use unseen_core::baselines::BaselineKind;
use unseen_core::estimators::SmoothingScheme;
use unseen_core::exec::{with_threads, Execution};
use unseen_core::harness::{
    discovery_curve, emit_curve, emit_nmse, estimate_report, ingest_corpus, read_counts_csv, run_nmse, simulate,
    to_json_string, write_counts_csv, Corpus, CurveConfig, CurveSource, EstimatorId, ExperimentConfig, Format,
    PrimaryRule, SubsampleMode,
};
use unseen_core::oracles::{render_table, verify_all, VerificationReport, VerifyOptions, CHECK_NAMES};
use unseen_core::prevalence::PrevalenceHistogram;
use unseen_core::sampling::{PopulationSpec, SamplingModel};
use unseen_core::smoothing::SmoothingDistribution;
use unseen_core::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_SCHEME: u8 = 3;
const EXIT_FAILURES: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser)]
#[command(name = "unseen", version, about = "Predict the number of unseen species in a larger sample")]
struct Cli {
    /// Maximum worker threads (falls back to UNSEEN_THREADS; default: all cores).
    #[arg(long, global = true, env = "UNSEEN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate unseen species from a prevalence histogram or a text corpus.
    Estimate(EstimateArgs),
    /// Draw one observed and one future sample from a synthetic population.
    Simulate(SimulateArgs),
    /// Species discovery curve, synthetic or from a corpus.
    Curve(CurveArgs),
    /// Normalized mean squared error of estimators by Monte-Carlo.
    Nmse(NmseArgs),
    /// Tokenize a text file into per-word counts.
    Ingest(IngestArgs),
    /// Run the numerical identity and bound checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

impl From<TableFormat> for Format {
    fn from(f: TableFormat) -> Self {
        match f {
            TableFormat::Csv => Format::Csv,
            TableFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Random,
    Consecutive,
}

#[derive(Args)]
struct EstimateArgs {
    /// Prevalence histogram CSV with header `frequency,count`.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    hist: Option<PathBuf>,
    /// UTF-8 text file to tokenize.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Lowercase corpus tokens.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    lowercase: bool,
    /// Size of the future sample relative to the observed one.
    #[arg(long)]
    t: f64,
    /// gt, poisson, binomial-et, binomial-opt or hyper-poisson.
    #[arg(long, default_value = "binomial-opt", conflicts_with = "pmf")]
    scheme: String,
    /// Custom smoothing law as a CSV with header `ell,prob`.
    #[arg(long)]
    pmf: Option<PathBuf>,
    /// Clamp estimates to [0, t·n].
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    clamp: bool,
    /// Comma-separated baselines: chao-lee, ace, jackknife1..5, scl, empirical.
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct SimulateArgs {
    /// Population, e.g. uniform:100, zipf:1000:1, dirichlet:500:0.5:3, urn:100:5, bernoulli:100:0.1.
    #[arg(long)]
    pop: String,
    /// multinomial, poisson, hypergeometric or bernoulli-product.
    #[arg(long, default_value = "multinomial")]
    model: String,
    #[arg(long)]
    n: u64,
    /// Future sample size.
    #[arg(long)]
    m: u64,
    #[arg(long)]
    seed: u64,
    /// Also write the observed histogram as CSV here.
    #[arg(long)]
    hist_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct TableOutput {
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NmseArgs {
    #[arg(long)]
    pop: String,
    #[arg(long, default_value = "poisson")]
    model: String,
    #[arg(long)]
    n: u64,
    /// One or more t values (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
    /// Estimators: gt, smoothing schemes, baselines, const-half, oracle.
    #[arg(long, value_delimiter = ',', default_value = "binomial-opt")]
    estimator: Vec<String>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    clamp: bool,
    /// Run trials one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    output: TableOutput,
}

#[derive(Args)]
struct CurveArgs {
    /// Synthetic population (with --model and --n).
    #[arg(long, conflicts_with_all = ["corpus", "counts"], required_unless_present_any = ["corpus", "counts"])]
    pop: Option<String>,
    #[arg(long, default_value = "multinomial")]
    model: String,
    /// Observed sample size; for data sources defaults to --fraction of the tokens.
    #[arg(long)]
    n: Option<u64>,
    /// UTF-8 text to subsample.
    #[arg(long, conflicts_with = "counts")]
    corpus: Option<PathBuf>,
    /// `symbol,count` CSV to subsample (random mode only).
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    lowercase: bool,
    /// Observed fraction of a data source when --n is absent.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long, value_enum, default_value_t = Mode::Random)]
    mode: Mode,
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "binomial-opt")]
    estimator: Vec<String>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    clamp: bool,
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    output: TableOutput,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    lowercase: bool,
    /// Write `symbol,count` CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the prevalence histogram CSV here.
    #[arg(long)]
    hist_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run every check (the default when --check is absent).
    #[arg(long)]
    all: bool,
    /// Run only these checks.
    #[arg(long, value_delimiter = ',', conflicts_with = "all")]
    check: Vec<String>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    variance_trials: usize,
    #[arg(long, default_value_t = 100_000)]
    unbiasedness_trials: usize,
    #[arg(long, default_value_t = 10_000)]
    laguerre_points: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SmoothingUndefined { .. } => EXIT_SCHEME,
            Error::TooManyFailures { .. } => EXIT_FAILURES,
            _ => EXIT_INPUT,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::input(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = with_threads(cli.threads, || run(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Nmse(a) => cmd_nmse(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_corpus(path: &Path, lowercase: bool) -> CliResult<Corpus> {
    let bytes = read_file(path)?;
    ingest_corpus(&bytes, lowercase).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn parse_model(s: &str) -> CliResult<SamplingModel> {
    SamplingModel::from_name(s).ok_or_else(|| {
        Failure::input(format!("unknown model `{s}` (expected multinomial, poisson, hypergeometric or bernoulli-product)"))
    })
}

fn parse_pop(s: &str) -> CliResult<PopulationSpec> {
    s.parse().map_err(|e: Error| Failure::input(e.to_string()))
}

fn parse_estimators(names: &[String]) -> CliResult<Vec<EstimatorId>> {
    names.iter().map(|s| s.trim().parse().map_err(|e: Error| Failure::input(e.to_string()))).collect()
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn write_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    match path {
        Some(p) => {
            let mut f = unseen_core::harness::create_output(&p.to_path_buf())?;
            body(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> CliResult {
    let hist = match (&a.hist, &a.corpus) {
        (Some(p), None) => {
            let bytes = read_file(p)?;
            PrevalenceHistogram::read_csv(bytes.as_slice()).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?
        }
        (None, Some(p)) => load_corpus(p, a.lowercase)?.histogram(),
        _ => return Err(Failure::input("give exactly one of --hist or --corpus")),
    };
    let rule = match &a.pmf {
        Some(p) => PrimaryRule::Custom(
            SmoothingDistribution::custom_from_csv_path(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
        ),
        None if a.scheme == "gt" => PrimaryRule::Gt,
        None => PrimaryRule::Scheme(SmoothingScheme::from_name(&a.scheme).ok_or_else(|| {
            Failure::input(format!(
                "unknown scheme `{}` (expected gt, poisson, binomial-et, binomial-opt or hyper-poisson)",
                a.scheme
            ))
        })?),
    };
    let baselines: Vec<BaselineKind> = a
        .baselines
        .iter()
        .map(|s| s.trim().parse().map_err(|e: Error| Failure::input(e.to_string())))
        .collect::<CliResult<_>>()?;
    let report = match estimate_report(&hist, a.t, &rule, a.clamp, &baselines) {
        Err(Error::SmoothingUndefined { t }) => {
            return Err(Failure {
                code: EXIT_SCHEME,
                message: format!(
                    "scheme `{}` is not defined at t = {t}; use --scheme gt (plain Good-Toulmin) for t <= 1",
                    rule.name()
                ),
            })
        }
        other => other?,
    };
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
    match a.format {
        OutputFormat::Text => print!("{}", report.to_text()),
        OutputFormat::Json => print!("{}", to_json_string(&report)?),
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let report = simulate(&parse_pop(&a.pop)?, parse_model(&a.model)?, a.n, a.m, a.seed)?;
    if let Some(p) = &a.hist_out {
        let mut f = unseen_core::harness::create_output(p)?;
        report.histogram.write_csv(&mut f)?;
        f.flush()?;
    }
    match a.format {
        OutputFormat::Text => {
            println!("sample_size\t{}", report.sample_size);
            println!("observed\t{}", report.observed);
            println!("unseen\t{}", report.unseen);
        }
        OutputFormat::Json => print!("{}", to_json_string(&report)?),
    }
    Ok(())
}

fn cmd_nmse(a: NmseArgs) -> CliResult {
    let config = ExperimentConfig {
        model: parse_model(&a.model)?,
        population: parse_pop(&a.pop)?,
        n: a.n,
        t_grid: a.t,
        estimators: parse_estimators(&a.estimator)?,
        trials: a.trials,
        seed: a.seed,
        clamp: a.clamp,
        execution: execution(a.sequential),
    };
    let report = run_nmse(&config)?;
    if report.failures > 0 {
        eprintln!("warning: {} estimator evaluations failed and were skipped", report.failures);
    }
    if report.fallbacks > 0 {
        eprintln!("warning: {} baseline evaluations fell back to the first-order jackknife", report.fallbacks);
    }
    write_output(a.output.out.as_deref(), |w| Ok(emit_nmse(&report, a.output.format.into(), w)?))
}

fn cmd_curve(a: CurveArgs) -> CliResult {
    let data = match (&a.corpus, &a.counts) {
        (Some(p), _) => Some((load_corpus(p, a.lowercase)?, p)),
        (None, Some(p)) => {
            if matches!(a.mode, Mode::Consecutive) {
                return Err(Failure::input("consecutive mode needs --corpus (a count table has no token order)"));
            }
            let bytes = read_file(p)?;
            Some((read_counts_csv(bytes.as_slice()).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?, p))
        }
        (None, None) => None,
    };
    let source = match data {
        Some((corpus, path)) => {
            let n = match a.n {
                Some(n) => n,
                None => {
                    if !(a.fraction > 0.0 && a.fraction <= 1.0) {
                        return Err(Failure::input("--fraction must lie in (0, 1]"));
                    }
                    (a.fraction * corpus.total() as f64).round() as u64
                }
            };
            CurveSource::Data {
                label: path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
                corpus,
                n,
                mode: match a.mode {
                    Mode::Random => SubsampleMode::WithoutReplacement,
                    Mode::Consecutive => SubsampleMode::Consecutive,
                },
            }
        }
        None => CurveSource::Synthetic {
            population: parse_pop(a.pop.as_deref().unwrap_or_default())?,
            model: parse_model(&a.model)?,
            n: a.n.ok_or_else(|| Failure::input("--n is required with --pop"))?,
        },
    };
    let config = CurveConfig {
        source,
        t_grid: a.t,
        estimators: parse_estimators(&a.estimator)?,
        trials: a.trials,
        seed: a.seed,
        clamp: a.clamp,
        execution: execution(a.sequential),
    };
    let report = discovery_curve(&config)?;
    if report.failures > 0 {
        eprintln!("warning: {} estimator evaluations failed and were skipped", report.failures);
    }
    for (est, mae) in &report.mean_abs_error {
        if let Some(mae) = mae {
            eprintln!("{est}: mean absolute error {mae:.4}");
        }
    }
    write_output(a.output.out.as_deref(), |w| Ok(emit_curve(&report, a.output.format.into(), w)?))
}

fn cmd_ingest(a: IngestArgs) -> CliResult {
    let corpus = load_corpus(&a.corpus, a.lowercase)?;
    if let Some(p) = &a.out {
        let mut f = unseen_core::harness::create_output(p)?;
        write_counts_csv(&corpus, &mut f)?;
        f.flush()?;
    }
    if let Some(p) = &a.hist_out {
        let mut f = unseen_core::harness::create_output(p)?;
        corpus.histogram().write_csv(&mut f)?;
        f.flush()?;
    }
    println!("tokens\t{}", corpus.total());
    println!("distinct\t{}", corpus.distinct());
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CliResult {
    for c in &a.check {
        if !CHECK_NAMES.contains(&c.as_str()) {
            return Err(Failure::input(format!("unknown check `{c}` (expected one of {})", CHECK_NAMES.join(", "))));
        }
    }
    let opts = VerifyOptions {
        seed: a.seed,
        variance_trials: a.variance_trials,
        unbiasedness_trials: a.unbiasedness_trials,
        laguerre_points: a.laguerre_points,
        execution: Execution::Parallel,
        checks: if a.all { Vec::new() } else { a.check.clone() },
    };
    let reports = verify_all(&opts)?;
    let json = to_json_string(&reports)?;
    if let Some(p) = &a.json {
        let mut f = unseen_core::harness::create_output(p)?;
        f.write_all(json.as_bytes())?;
        f.flush()?;
    }
    match a.format {
        OutputFormat::Text => print!("{}", render_table(&reports)),
        OutputFormat::Json => print!("{json}"),
    }
    verify_outcome(&reports)
}

fn verify_outcome(reports: &[VerificationReport]) -> CliResult {
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Failure { code: EXIT_VERIFY, message: format!("{failed} of {} checks failed", reports.len()) });
    }
    Ok(())
}
