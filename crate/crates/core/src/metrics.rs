//! Spike-train comparison: van Rossum distance, Victor-Purpura distance and
//! Pearson correlation of binned spike counts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spike times in seconds, non-decreasing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpikeTrain {
    times: Vec<f64>,
}

impl SpikeTrain {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("spike times must be sorted".into()));
        }
        Ok(Self { times })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Timestep `t` (1-based) sits at `(t − 1) / rate` seconds.
    pub fn from_indices(indices: &[usize], rate: f64) -> Self {
        let mut times: Vec<f64> = indices.iter().map(|&t| (t as f64 - 1.0) / rate).collect();
        times.sort_by(f64::total_cmp);
        Self { times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// van Rossum kernel time constant, seconds.
    pub vr_tau: f64,
    /// Victor-Purpura cost per second of shift.
    pub vp_q: f64,
    /// Correlation bin width, seconds.
    pub corr_bin: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            vr_tau: 0.1,
            vp_q: 10.0,
            corr_bin: 0.04,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vr_tau", self.vr_tau),
            ("vp_q", self.vp_q),
            ("corr_bin", self.corr_bin),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// `Σ_i Σ_j exp(−|a_i − b_j| / tau)` for sorted inputs in `O(|a| + |b|)`.
fn kernel_sum(a: &[f64], b: &[f64], tau: f64) -> f64 {
    // Pairs with b_j <= a_i: sweep forward carrying Σ exp(−(a_i − b_j)/tau).
    let mut total = 0.0;
    let mut carry = 0.0;
    let mut anchor = f64::NEG_INFINITY;
    let mut j = 0;
    for &t in a {
        while j < b.len() && b[j] <= t {
            carry = carry * decay(b[j] - anchor, tau) + 1.0;
            anchor = b[j];
            j += 1;
        }
        if j > 0 {
            total += carry * decay(t - anchor, tau);
        }
    }
    // Pairs with b_j > a_i: sweep backward.
    let mut carry = 0.0;
    let mut anchor = f64::INFINITY;
    let mut j = b.len();
    for &t in a.iter().rev() {
        while j > 0 && b[j - 1] > t {
            carry = carry * decay(anchor - b[j - 1], tau) + 1.0;
            anchor = b[j - 1];
            j -= 1;
        }
        if j < b.len() {
            total += carry * decay(anchor - t, tau);
        }
    }
    total
}

#[inline]
fn decay(dt: f64, tau: f64) -> f64 {
    if dt.is_infinite() {
        0.0
    } else {
        (-dt / tau).exp()
    }
}

/// `sqrt((1/τ) ∫ (f_a − f_b)² dt)` with causal exponential kernels, so a
/// lone unmatched spike contributes `1/√2`.
pub fn van_rossum(a: &SpikeTrain, b: &SpikeTrain, tau: f64) -> f64 {
    let aa = kernel_sum(&a.times, &a.times, tau);
    let bb = kernel_sum(&b.times, &b.times, tau);
    let ab = kernel_sum(&a.times, &b.times, tau);
    (0.5 * (aa + bb - 2.0 * ab)).max(0.0).sqrt()
}

/// Edit distance with unit insert/delete cost and shift cost `q·|Δt|`.
pub fn victor_purpura(a: &SpikeTrain, b: &SpikeTrain, q: f64) -> f64 {
    let (a, b) = (&a.times, &b.times);
    let mut prev: Vec<f64> = (0..=b.len()).map(|j| j as f64).collect();
    let mut cur = vec![0.0; b.len() + 1];
    for (i, &ta) in a.iter().enumerate() {
        cur[0] = (i + 1) as f64;
        for (j, &tb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j + 1] + 1.0)
                .min(cur[j] + 1.0)
                .min(prev[j] + q * (ta - tb).abs());
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    /// One of the count vectors had zero variance; `value` is then 0.
    pub degenerate: bool,
}

fn bin_counts(train: &SpikeTrain, bin: f64, nbins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; nbins];
    for &t in &train.times {
        if t < 0.0 {
            continue;
        }
        let k = ((t / bin).floor() as usize).min(nbins - 1);
        counts[k] += 1.0;
    }
    counts
}

/// Pearson correlation of spike counts in consecutive bins over `[0, horizon]`.
pub fn binned_correlation(a: &SpikeTrain, b: &SpikeTrain, bin: f64, horizon: f64) -> Correlation {
    let nbins = ((horizon / bin).ceil() as usize).max(1);
    let ca = bin_counts(a, bin, nbins);
    let cb = bin_counts(b, bin, nbins);
    let n = nbins as f64;
    let ma = ca.iter().sum::<f64>() / n;
    let mb = cb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ca.iter().zip(&cb) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Correlation {
            value: 0.0,
            degenerate: true,
        };
    }
    if ca == cb {
        // Exact, rather than 1 up to rounding.
        return Correlation {
            value: 1.0,
            degenerate: false,
        };
    }
    Correlation {
        value: (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "vr")]
    VanRossum,
    #[serde(rename = "vp")]
    VictorPurpura,
    #[serde(rename = "corr")]
    Correlation,
}

impl Metric {
    /// Correlation is maximized, distances minimized.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Correlation)
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    /// Scores `estimated` against `truth`; `horizon` bounds the correlation bins.
    pub fn score(
        self,
        estimated: &SpikeTrain,
        truth: &SpikeTrain,
        params: &MetricParams,
        horizon: f64,
    ) -> f64 {
        match self {
            Metric::VanRossum => van_rossum(estimated, truth, params.vr_tau),
            Metric::VictorPurpura => victor_purpura(estimated, truth, params.vp_q),
            Metric::Correlation => {
                binned_correlation(estimated, truth, params.corr_bin, horizon).value
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::VanRossum => "vr",
            Metric::VictorPurpura => "vp",
            Metric::Correlation => "corr",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vr" | "van_rossum" => Ok(Metric::VanRossum),
            "vp" | "victor_purpura" => Ok(Metric::VictorPurpura),
            "corr" | "correlation" => Ok(Metric::Correlation),
            other => Err(Error::Parse(format!("unknown metric {other:?}"))),
        }
    }
}
