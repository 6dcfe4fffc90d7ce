//! Command-line front end: deconvolve traces, simulate data, score spike
//! trains, tune the penalty and time the solvers.
//!
//! Exit status is 0 on success, 1 when a solve or an output write fails and
//! 2 for usage, parse and configuration errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fastl0::io::{
    parse_spike_times, parse_trace, write_spike_times, write_trace, ResultFile, Trace,
};
use fastl0::oracle::op_solve;
use fastl0::tuning::{default_lambda_grid, log_grid, DEFAULT_FRAME_RATE};
use fastl0::{
    binned_correlation, gamma_from_rate, generate, max_region_count, solve, solve_with_intercept,
    tune_lambda, IndicatorClass, Metric, MetricParams, SimulationConfig, SolverConfig, SpikeTrain,
    TuneOptions,
};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    /// Bad flags, unreadable or malformed input, invalid configuration.
    #[error("{0}")]
    Usage(String),
    /// The computation or writing its output failed.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "fastl0",
    version,
    about = "Exact l0 spike deconvolution of calcium imaging traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate spikes and calcium from a fluorescence trace.
    Deconvolve(DeconvolveArgs),
    /// Simulate a trace and its true spike times.
    Simulate(SimulateArgs),
    /// Compare estimated spike times with the truth.
    Evaluate(EvaluateArgs),
    /// Choose the penalty on the first half of a trace and score it on the second.
    Tune(TuneArgs),
    /// Time a solver on simulated traces.
    Benchmark(BenchmarkArgs),
}

/// A `lo:hi:n` grid specification.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GridSpec {
    lo: f64,
    hi: f64,
    n: usize,
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(format!("expected lo:hi:n, got {s:?}"));
        };
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: {v:?}"))
        };
        let (lo, hi) = (num(lo)?, num(hi)?);
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| format!("not a count: {n:?}"))?;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && n >= 1) {
            return Err(format!("grid needs finite lo <= hi and n >= 1, got {s:?}"));
        }
        Ok(Self { lo, hi, n })
    }
}

impl GridSpec {
    fn linear(self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| {
                if i + 1 == self.n {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }

    fn log(self) -> CliResult<Vec<f64>> {
        log_grid(self.lo, self.hi, self.n).map_err(usage)
    }
}

#[derive(Debug, Args)]
struct InterceptArgs {
    /// Baseline subtracted from the trace.
    #[arg(long, conflicts_with = "beta0_grid")]
    beta0: Option<f64>,
    /// Search the baseline over a linear grid `lo:hi:n`.
    #[arg(long, value_name = "LO:HI:N")]
    beta0_grid: Option<GridSpec>,
}

#[derive(Debug, Args)]
struct DeconvolveArgs {
    /// Trace CSV: one value per line, or `time,value`.
    #[arg(long)]
    input: PathBuf,
    /// Calcium decay per timestep, in (0, 1).
    #[arg(long)]
    gamma: f64,
    /// Penalty per spike.
    #[arg(long)]
    lambda: f64,
    /// Allow negative spikes.
    #[arg(long)]
    unconstrained: bool,
    #[command(flatten)]
    intercept: InterceptArgs,
    /// Lower bound on the calcium level.
    #[arg(long)]
    rho: Option<f64>,
    /// Frame rate in Hz for spike times; defaults to the trace's own timestamps, else 100.
    #[arg(long)]
    rate: Option<f64>,
    /// Leave the calcium path out of the result.
    #[arg(long)]
    no_calcium: bool,
    /// Result JSON path; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of timesteps.
    #[arg(long = "T", value_name = "T")]
    len: usize,
    #[arg(long)]
    gamma: f64,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: f64,
    /// Expected spikes per timestep.
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = 0.0)]
    beta0: f64,
    /// Calcium added by one spike.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long)]
    seed: u64,
    /// Frame rate in Hz used for the spike-time file.
    #[arg(long, default_value_t = DEFAULT_FRAME_RATE)]
    rate: f64,
    /// Writes `<prefix>.csv` and `<prefix>.spikes.txt`.
    #[arg(long)]
    output_prefix: PathBuf,
}

#[derive(Debug, Args)]
struct MetricArgs {
    /// van Rossum kernel time constant, seconds.
    #[arg(long, default_value_t = MetricParams::default().vr_tau)]
    vr_tau: f64,
    /// Victor-Purpura shift cost per second.
    #[arg(long, default_value_t = MetricParams::default().vp_q)]
    vp_q: f64,
    /// Correlation bin width, seconds.
    #[arg(long, default_value_t = MetricParams::default().corr_bin)]
    bin: f64,
}

impl MetricArgs {
    fn params(&self) -> CliResult<MetricParams> {
        let p = MetricParams {
            vr_tau: self.vr_tau,
            vp_q: self.vp_q,
            corr_bin: self.bin,
        };
        p.validate().map_err(usage)?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Spike times (one per line) or a result JSON from `deconvolve`.
    #[arg(long)]
    estimated: PathBuf,
    /// Spike times, one per line.
    #[arg(long)]
    truth: PathBuf,
    /// vr (van Rossum), vp (Victor-Purpura) or corr (binned correlation).
    #[arg(long)]
    metric: Metric,
    #[command(flatten)]
    metric_args: MetricArgs,
    /// Frame rate used to turn result-file indices into times; overrides their stored times.
    #[arg(long)]
    rate: Option<f64>,
    /// Also write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassArg {
    Fast,
    Medium,
    Slow,
}

impl From<ClassArg> for IndicatorClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Fast => IndicatorClass::Fast,
            ClassArg::Medium => IndicatorClass::Medium,
            ClassArg::Slow => IndicatorClass::Slow,
        }
    }
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    input: PathBuf,
    /// True spike times, one per line, in seconds from the first sample.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    metric: Metric,
    /// Log-spaced penalty grid `lo:hi:n`; defaults to 50 values scaled by the trace variance.
    #[arg(long, value_name = "LO:HI:N")]
    lambda_grid: Option<GridSpec>,
    /// Decay per timestep; otherwise derived from --rate and --class.
    #[arg(long, conflicts_with = "class", required_unless_present = "class")]
    gamma: Option<f64>,
    /// Indicator kinetics used to derive the decay.
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
    /// Frame rate in Hz; defaults to the trace's own timestamps, else 100.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    unconstrained: bool,
    #[command(flatten)]
    intercept: InterceptArgs,
    #[command(flatten)]
    metric_args: MetricArgs,
    /// Writes `<prefix>.csv` (per-penalty training scores) and `<prefix>.json` (summary).
    #[arg(long)]
    output_prefix: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Fpop,
    Op,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    solver: SolverArg,
    #[arg(long = "T", value_name = "T")]
    len: usize,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Repetition `i` uses seed `seed + i`.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    constrained: bool,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes to stdout, reporting a closed pipe as an error instead of panicking.
fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| runtime(format!("cannot write to stdout: {e}")))
}

fn load_trace(path: &Path) -> CliResult<Trace> {
    parse_trace(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn frame_rate(flag: Option<f64>, trace: &Trace) -> CliResult<f64> {
    let rate = flag.or(trace.rate).unwrap_or(DEFAULT_FRAME_RATE);
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(usage(format!("frame rate must be positive, got {rate}")));
    }
    Ok(rate)
}

/// Appends `suffix` to the full prefix, so `out/run.1` becomes `out/run.1.csv`.
fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Six significant digits, never in exponent form for ordinary magnitudes.
fn six_significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.6}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-5..=15).contains(&magnitude) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn solver_config(
    gamma: f64,
    lambda: f64,
    unconstrained: bool,
    rho: Option<f64>,
) -> CliResult<SolverConfig> {
    let mut cfg = if unconstrained {
        SolverConfig::unconstrained(gamma, lambda)
    } else {
        SolverConfig::constrained(gamma, lambda)
    };
    if let Some(rho) = rho {
        cfg = cfg.with_floor(rho);
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn deconvolve(args: DeconvolveArgs) -> CliResult<()> {
    let trace = load_trace(&args.input)?;
    let rate = frame_rate(args.rate, &trace)?;
    let mut cfg = solver_config(args.gamma, args.lambda, args.unconstrained, args.rho)?;
    if let Some(b) = args.intercept.beta0 {
        cfg = cfg.with_beta0(b);
        cfg.validate().map_err(usage)?;
    }
    let result = match args.intercept.beta0_grid {
        Some(grid) => {
            let (result, beta0) =
                solve_with_intercept(&trace.values, &cfg, &grid.linear()).map_err(runtime)?;
            cfg = cfg.with_beta0(beta0);
            result
        }
        None => solve(&trace.values, &cfg).map_err(runtime)?,
    };
    let json = ResultFile::from_result(&result, &cfg, rate, !args.no_calcium).to_json() + "\n";
    match &args.output {
        Some(path) => {
            write_text(path, &json)?;
            eprintln!(
                "{} spikes, objective {}, wrote {}",
                result.num_spikes(),
                result.objective,
                path.display()
            );
            Ok(())
        }
        None => emit(&json),
    }
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    if !(args.rate > 0.0 && args.rate.is_finite()) {
        return Err(usage(format!(
            "frame rate must be positive, got {}",
            args.rate
        )));
    }
    let cfg = SimulationConfig {
        beta0: args.beta0,
        amplitude: args.amplitude,
        ..SimulationConfig::new(args.len, args.gamma, args.sigma, args.theta, args.seed)
    };
    cfg.validate().map_err(usage)?;
    let sim = generate(&cfg).map_err(runtime)?;
    let spikes = SpikeTrain::from_indices(&sim.spike_times, args.rate);
    write_text(
        &with_suffix(&args.output_prefix, ".csv"),
        &write_trace(&sim.y),
    )?;
    write_text(
        &with_suffix(&args.output_prefix, ".spikes.txt"),
        &write_spike_times(&spikes),
    )?;
    Ok(())
}

/// Spike times from either a plain list or a `deconvolve` result file.
fn load_estimate(path: &Path, rate: Option<f64>) -> CliResult<SpikeTrain> {
    let text = read_text(path)?;
    let bad = |e: fastl0::Error| usage(format!("{}: {e}", path.display()));
    if text.trim_start().starts_with('{') {
        let file = ResultFile::from_json(&text).map_err(bad)?;
        return Ok(match rate {
            Some(rate) => {
                let indices: Vec<usize> = file.spikes.iter().map(|s| s.index).collect();
                SpikeTrain::from_indices(&indices, rate)
            }
            None => file.spike_train(),
        });
    }
    parse_spike_times(&text).map_err(bad)
}

fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    if let Some(rate) = args.rate {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(usage(format!("frame rate must be positive, got {rate}")));
        }
    }
    let params = args.metric_args.params()?;
    let estimated = load_estimate(&args.estimated, args.rate)?;
    let truth = parse_spike_times(&read_text(&args.truth)?)
        .map_err(|e| usage(format!("{}: {e}", args.truth.display())))?;

    // Bins cover both trains; one spare bin keeps a spike at the end inside.
    let last = estimated
        .last_time()
        .into_iter()
        .chain(truth.last_time())
        .fold(0.0, f64::max);
    let horizon = last + params.corr_bin;
    let value = args.metric.score(&estimated, &truth, &params, horizon);

    if let Some(path) = &args.report {
        let mut report = json!({
            "metric": args.metric.as_str(),
            "value": value,
            "estimated_count": estimated.len(),
            "truth_count": truth.len(),
            "params": { "vr_tau": params.vr_tau, "vp_q": params.vp_q, "bin": params.corr_bin },
        });
        if args.metric == Metric::Correlation {
            report["degenerate"] = binned_correlation(&estimated, &truth, params.corr_bin, horizon)
                .degenerate
                .into();
        }
        let text = serde_json::to_string_pretty(&report).map_err(runtime)? + "\n";
        write_text(path, &text)?;
    }
    emit(&format!("{}\n", six_significant(value)))
}

fn tune(args: TuneArgs) -> CliResult<()> {
    let trace = load_trace(&args.input)?;
    let rate = frame_rate(args.rate, &trace)?;
    let truth = parse_spike_times(&read_text(&args.truth)?)
        .map_err(|e| usage(format!("{}: {e}", args.truth.display())))?;
    let gamma = match (args.gamma, args.class) {
        (Some(g), _) => g,
        (None, Some(class)) => gamma_from_rate(rate, class.into()).map_err(usage)?,
        (None, None) => return Err(usage("either --gamma or --class is required")),
    };
    let grid = match args.lambda_grid {
        Some(spec) => spec.log()?,
        None => default_lambda_grid(&trace.values).map_err(usage)?,
    };
    let mut cfg = solver_config(gamma, 1.0, args.unconstrained, None)?;
    if let Some(b) = args.intercept.beta0 {
        cfg = cfg.with_beta0(b);
        cfg.validate().map_err(usage)?;
    }
    let opts = TuneOptions {
        params: args.metric_args.params()?,
        frame_rate: rate,
        beta0_grid: args.intercept.beta0_grid.map(GridSpec::linear),
        ..TuneOptions::new(args.metric)
    };
    let report = tune_lambda(&trace.values, &truth, &grid, &cfg, &opts).map_err(|e| match e {
        fastl0::Error::InvalidConfig(_) | fastl0::Error::InvalidGamma(_) => usage(e),
        other => runtime(other),
    })?;

    if let Some(prefix) = &args.output_prefix {
        write_text(&with_suffix(prefix, ".csv"), &report.to_csv())?;
        write_text(
            &with_suffix(prefix, ".json"),
            &(report.summary_json() + "\n"),
        )?;
    }
    emit(&format!(
        "chosen_lambda={} test_score={}\n",
        report.chosen_lambda,
        six_significant(report.test_score)
    ))
}

fn benchmark(args: BenchmarkArgs) -> CliResult<()> {
    if args.solver == SolverArg::Op && args.constrained {
        return Err(usage(
            "the op solver handles only the unconstrained problem",
        ));
    }
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let cfg = solver_config(args.gamma, args.lambda, !args.constrained, None)?;
    let solver_name = match args.solver {
        SolverArg::Fpop => "fpop",
        SolverArg::Op => "op",
    };
    let mut out = String::from("rep,seed,solver,T,theta,seconds,objective,spikes,max_regions\n");
    let mut times = Vec::with_capacity(args.reps);
    for rep in 0..args.reps {
        let seed = args.seed.wrapping_add(rep as u64);
        let sim_cfg = SimulationConfig::new(args.len, args.gamma, args.sigma, args.theta, seed);
        sim_cfg.validate().map_err(usage)?;
        let y = generate(&sim_cfg).map_err(runtime)?.y;
        let start = Instant::now();
        let result = match args.solver {
            SolverArg::Fpop => solve(&y, &cfg),
            SolverArg::Op => op_solve(&y, &cfg),
        }
        .map_err(runtime)?;
        let seconds = start.elapsed().as_secs_f64();
        times.push(seconds);
        let regions = match args.solver {
            SolverArg::Fpop => max_region_count(&result).to_string(),
            SolverArg::Op => String::new(),
        };
        out.push_str(&format!(
            "{rep},{seed},{solver_name},{},{},{seconds:.6},{},{},{regions}\n",
            args.len,
            args.theta,
            result.objective,
            result.num_spikes()
        ));
    }
    emit(&out)?;
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    eprintln!("median seconds over {} reps: {median:.6}", args.reps);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Deconvolve(a) => deconvolve(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Tune(a) => tune(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
