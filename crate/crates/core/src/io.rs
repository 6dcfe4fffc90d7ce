//! Text formats: fluorescence traces (CSV), spike-time lists and the JSON
//! result file.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SpikeTrain;
use crate::solver::{max_region_count, DeconvolutionResult, SolverConfig};

/// Fluorescence samples, with the frame rate when the file carried timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub values: Vec<f64>,
    pub rate: Option<f64>,
}

fn parse_number(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: not a number: {:?}", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite value")));
    }
    Ok(v)
}

/// Parses a one-column (`value`) or two-column (`time,value`) CSV trace.
/// A first line that does not parse as numbers is taken as a header.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut columns = None;
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if std::mem::take(&mut first) && fields.iter().any(|f| f.trim().parse::<f64>().is_err()) {
            columns = Some(fields.len());
            continue;
        }
        match (fields.len(), columns) {
            (1, None | Some(1)) => {
                columns = Some(1);
                values.push(parse_number(fields[0], i + 1)?);
            }
            (2, None | Some(2)) => {
                columns = Some(2);
                times.push(parse_number(fields[0], i + 1)?);
                values.push(parse_number(fields[1], i + 1)?);
            }
            (n, _) => {
                return Err(Error::Parse(format!(
                    "line {}: unexpected {n} columns",
                    i + 1
                )));
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let rate = if times.len() >= 2 {
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::Parse("time column must be increasing".into()));
        }
        for (k, w) in times.windows(2).enumerate() {
            let step = w[1] - w[0];
            if ((step - dt) / dt).abs() > 1e-6 {
                return Err(Error::Parse(format!(
                    "non-uniform sampling at row {}: step {step} vs mean {dt}",
                    k + 2
                )));
            }
        }
        Some(1.0 / dt)
    } else {
        None
    };
    Ok(Trace { values, rate })
}

/// One value per line, shortest round-trip formatting.
pub fn write_trace(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    out
}

/// One spike time per line; blank lines and `#` comments are skipped.
pub fn parse_spike_times(text: &str) -> Result<SpikeTrain> {
    let mut times = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        times.push(parse_number(line, i + 1)?);
    }
    SpikeTrain::new(times).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_spike_times(train: &SpikeTrain) -> String {
    let mut out = String::new();
    for t in train.times() {
        let _ = writeln!(out, "{t}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecord {
    pub index: usize,
    pub time_s: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub gamma: f64,
    pub lambda: f64,
    pub beta0: f64,
    pub constrained: bool,
    pub rho: f64,
}

impl From<&SolverConfig<f64>> for ConfigEcho {
    fn from(c: &SolverConfig<f64>) -> Self {
        Self {
            gamma: c.gamma,
            lambda: c.lambda,
            beta0: c.beta0,
            constrained: c.constrained,
            rho: c.floor,
        }
    }
}

/// JSON document written by the `deconvolve` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub spikes: Vec<SpikeRecord>,
    pub changepoints: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calcium: Option<Vec<f64>>,
    pub objective: f64,
    pub config: ConfigEcho,
    pub max_regions: usize,
    pub len: usize,
}

impl ResultFile {
    pub fn from_result(
        result: &DeconvolutionResult<f64>,
        config: &SolverConfig<f64>,
        rate: f64,
        include_calcium: bool,
    ) -> Self {
        Self {
            spikes: result
                .spikes
                .iter()
                .map(|s| SpikeRecord {
                    index: s.index,
                    time_s: (s.index as f64 - 1.0) / rate,
                    magnitude: s.magnitude,
                })
                .collect(),
            changepoints: result.changepoints.clone(),
            calcium: include_calcium.then(|| result.calcium.clone()),
            objective: result.objective,
            config: config.into(),
            max_regions: max_region_count(result),
            len: result.calcium.len(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(c) = &r.calcium {
            if c.len() != r.len {
                return Err(Error::Parse(format!(
                    "calcium has {} entries but len is {}",
                    c.len(),
                    r.len
                )));
            }
        }
        if r.spikes.len() != r.changepoints.len() {
            return Err(Error::Parse(
                "spikes and changepoints differ in length".into(),
            ));
        }
        Ok(r)
    }

    pub fn spike_train(&self) -> SpikeTrain {
        let mut times: Vec<f64> = self.spikes.iter().map(|s| s.time_s).collect();
        times.sort_by(f64::total_cmp);
        SpikeTrain::new(times).expect("finite sorted times")
    }

    /// `½Σ(y − β₀ − c)² + λk` recomputed from the stored calcium.
    pub fn recompute_objective(&self, y: &[f64]) -> Option<f64> {
        let c = self.calcium.as_ref()?;
        let fit: f64 = y
            .iter()
            .zip(c)
            .map(|(v, c)| 0.5 * (v - self.config.beta0 - c).powi(2))
            .sum();
        Some(fit + self.config.lambda * self.changepoints.len() as f64)
    }
}
