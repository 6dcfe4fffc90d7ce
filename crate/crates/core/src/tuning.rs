//! Train/test tuning of the spike penalty against ground-truth spike times.
//!
//! The first `⌊T/2⌋` timesteps are the training window. Every candidate
//! penalty is solved there and scored against the training spikes; the best
//! one is then applied to the test window.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricParams, SpikeTrain};
use crate::solver::{solve, solve_with_intercept, DeconvolutionResult, SolverConfig};

/// Frame rate assumed when a trace does not declare one.
pub const DEFAULT_FRAME_RATE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorClass {
    Fast,
    Medium,
    Slow,
}

impl IndicatorClass {
    /// Decay time scale in seconds.
    pub fn time_scale(self) -> f64 {
        match self {
            IndicatorClass::Fast => 0.7,
            IndicatorClass::Medium => 1.25,
            IndicatorClass::Slow => 2.0,
        }
    }
}

impl fmt::Display for IndicatorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndicatorClass::Fast => "fast",
            IndicatorClass::Medium => "medium",
            IndicatorClass::Slow => "slow",
        })
    }
}

impl FromStr for IndicatorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(IndicatorClass::Fast),
            "medium" => Ok(IndicatorClass::Medium),
            "slow" => Ok(IndicatorClass::Slow),
            other => Err(Error::Parse(format!("unknown indicator class {other:?}"))),
        }
    }
}

/// `γ = 1 − Δ/φ` with `Δ = 1/frame_rate`.
pub fn gamma_from_rate(frame_rate: f64, class: IndicatorClass) -> Result<f64> {
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "frame rate must be positive, got {frame_rate}"
        )));
    }
    let gamma = 1.0 - (1.0 / frame_rate) / class.time_scale();
    if gamma <= 0.0 {
        return Err(Error::InvalidGamma(gamma));
    }
    Ok(gamma)
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(Error::InvalidConfig(format!(
            "log grid needs 0 < lo <= hi and n >= 1, got {lo}:{hi}:{n}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

/// 50 log-spaced penalties over `[1e-4, 1e2]` times the trace variance.
pub fn default_lambda_grid(y: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { var } else { 1.0 };
    log_grid(1e-4 * scale, 1e2 * scale, 50)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub trace: Vec<f64>,
    /// Spike times relative to the window's first sample.
    pub truth: SpikeTrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Window,
    pub test: Window,
    /// Length of the training window, `⌊T/2⌋`.
    pub boundary: usize,
}

/// Splits at `⌊T/2⌋`. A spike belongs to the test window only if it falls at
/// or after the test window's first sample.
pub fn split_train_test(y: &[f64], truth: &SpikeTrain, frame_rate: f64) -> Result<Split> {
    if y.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least two samples to split".into(),
        ));
    }
    let h = y.len() / 2;
    let origin = h as f64 / frame_rate;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &t in truth.times() {
        // Snap to the sample grid so re-referenced times stay exact.
        let pos = t * frame_rate;
        let snapped = pos.round();
        let on_grid = (pos - snapped).abs() < 1e-6;
        if (on_grid && snapped < h as f64) || (!on_grid && t < origin) {
            train.push(t);
        } else if on_grid {
            test.push((snapped - h as f64) / frame_rate);
        } else {
            test.push(t - origin);
        }
    }
    Ok(Split {
        train: Window {
            trace: y[..h].to_vec(),
            truth: SpikeTrain::new(train)?,
        },
        test: Window {
            trace: y[h..].to_vec(),
            truth: SpikeTrain::new(test)?,
        },
        boundary: h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub lambda: f64,
    pub train_score: f64,
    pub spike_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub metric: Metric,
    pub gamma: f64,
    pub beta0: f64,
    pub constrained: bool,
    /// Rows in ascending penalty order.
    pub rows: Vec<TuneRow>,
    pub chosen_lambda: f64,
    pub train_score: f64,
    pub test_score: f64,
    pub test_spike_count: usize,
    pub train_truth_count: usize,
    pub test_truth_count: usize,
}

impl TuneReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,train_score,spike_count\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.lambda, r.train_score, r.spike_count);
        }
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            metric: Metric,
            gamma: f64,
            beta0: f64,
            constrained: bool,
            grid_size: usize,
            chosen_lambda: f64,
            train_score: f64,
            test_score: f64,
            test_spike_count: usize,
            train_truth_count: usize,
            test_truth_count: usize,
            rows: &'a [TuneRow],
        }
        serde_json::to_string_pretty(&Summary {
            metric: self.metric,
            gamma: self.gamma,
            beta0: self.beta0,
            constrained: self.constrained,
            grid_size: self.rows.len(),
            chosen_lambda: self.chosen_lambda,
            train_score: self.train_score,
            test_score: self.test_score,
            test_spike_count: self.test_spike_count,
            train_truth_count: self.train_truth_count,
            test_truth_count: self.test_truth_count,
            rows: &self.rows,
        })
        .expect("summary serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    pub metric: Metric,
    pub params: MetricParams,
    pub frame_rate: f64,
    /// When set, every solve also searches this intercept grid.
    pub beta0_grid: Option<Vec<f64>>,
}

impl TuneOptions {
    pub fn new(metric: Metric) -> Self {
        Self {
            metric,
            params: MetricParams::default(),
            frame_rate: DEFAULT_FRAME_RATE,
            beta0_grid: None,
        }
    }
}

fn run(
    y: &[f64],
    cfg: &SolverConfig<f64>,
    opts: &TuneOptions,
) -> Result<(DeconvolutionResult<f64>, f64)> {
    match &opts.beta0_grid {
        Some(grid) => solve_with_intercept(y, cfg, grid),
        None => solve(y, cfg).map(|r| (r, cfg.beta0)),
    }
}

fn score(
    result: &DeconvolutionResult<f64>,
    truth: &SpikeTrain,
    len: usize,
    opts: &TuneOptions,
) -> f64 {
    let est = SpikeTrain::from_indices(&result.spike_indices(), opts.frame_rate);
    let horizon = len as f64 / opts.frame_rate;
    opts.metric.score(&est, truth, &opts.params, horizon)
}

/// Grid search over `lambda_grid` on the training half, evaluated on the test half.
pub fn tune_lambda(
    y: &[f64],
    truth: &SpikeTrain,
    lambda_grid: &[f64],
    cfg: &SolverConfig<f64>,
    opts: &TuneOptions,
) -> Result<TuneReport> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("penalty grid is empty".into()));
    }
    if let Some(bad) = lambda_grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidConfig(format!("invalid penalty {bad}")));
    }
    opts.params.validate()?;
    let split = split_train_test(y, truth, opts.frame_rate)?;
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let train_len = split.train.trace.len();
    let rows: Vec<TuneRow> = grid
        .par_iter()
        .map(|&lambda| {
            let (r, _) = run(&split.train.trace, &cfg.with_lambda(lambda), opts)?;
            Ok(TuneRow {
                lambda,
                train_score: score(&r, &split.train.truth, train_len, opts),
                spike_count: r.num_spikes(),
            })
        })
        .collect::<Result<_>>()?;

    // Rows are ascending, so keeping the first strict improvement favours the smaller penalty.
    let mut best = rows[0];
    for r in &rows[1..] {
        if opts.metric.better(r.train_score, best.train_score) {
            best = *r;
        }
    }

    let test_cfg = cfg.with_lambda(best.lambda);
    let (test_result, beta0) = run(&split.test.trace, &test_cfg, opts)?;
    let test_score = score(
        &test_result,
        &split.test.truth,
        split.test.trace.len(),
        opts,
    );

    Ok(TuneReport {
        metric: opts.metric,
        gamma: cfg.gamma,
        beta0,
        constrained: cfg.constrained,
        rows,
        chosen_lambda: best.lambda,
        train_score: best.train_score,
        test_score,
        test_spike_count: test_result.num_spikes(),
        train_truth_count: split.train.truth.len(),
        test_truth_count: split.test.truth.len(),
    })
}
