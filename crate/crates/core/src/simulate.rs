//! Synthetic fluorescence traces: Poisson spike counts drive an AR(1)
//! calcium process observed with Gaussian noise on top of a baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub len: usize,
    pub gamma: f64,
    pub beta0: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    /// Expected spikes per timestep.
    pub rate: f64,
    /// Calcium added by one spike.
    pub amplitude: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(len: usize, gamma: f64, sigma: f64, rate: f64, seed: u64) -> Self {
        Self {
            len,
            gamma,
            beta0: 0.0,
            sigma,
            rate,
            amplitude: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.len == 0 {
            return bad("trace length must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidGamma(self.gamma));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!(
                "noise level must be non-negative, got {}",
                self.sigma
            ));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return bad(format!(
                "spike rate must be non-negative, got {}",
                self.rate
            ));
        }
        if !self.amplitude.is_finite() || !self.beta0.is_finite() {
            return bad("amplitude and intercept must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrace {
    pub y: Vec<f64>,
    pub calcium: Vec<f64>,
    pub spike_counts: Vec<u32>,
    /// 1-based timesteps with at least one spike.
    pub spike_times: Vec<usize>,
}

impl SimulatedTrace {
    /// Spike timesteps the deconvolution problem can represent: a spike at
    /// the first timestep is indistinguishable from the initial calcium level.
    pub fn detectable_spike_times(&self) -> Vec<usize> {
        self.spike_times
            .iter()
            .copied()
            .filter(|&t| t >= 2)
            .collect()
    }
}

/// Draws a trace. Identical configs give bit-identical output.
pub fn generate(cfg: &SimulationConfig) -> Result<SimulatedTrace> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let spike_counts: Vec<u32> = if cfg.rate > 0.0 {
        let poisson = Poisson::new(cfg.rate).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        (0..cfg.len)
            .map(|_| poisson.sample(&mut rng) as u32)
            .collect()
    } else {
        vec![0; cfg.len]
    };

    let mut calcium = Vec::with_capacity(cfg.len);
    let mut level = 0.0;
    for &count in &spike_counts {
        level = cfg.gamma * level + cfg.amplitude * f64::from(count);
        calcium.push(level);
    }

    let y = if cfg.sigma > 0.0 {
        let normal =
            Normal::new(0.0, cfg.sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        calcium
            .iter()
            .map(|c| cfg.beta0 + c + normal.sample(&mut rng))
            .collect()
    } else {
        calcium.iter().map(|c| cfg.beta0 + c).collect()
    };

    let spike_times = spike_counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(i, _)| i + 1)
        .collect();

    Ok(SimulatedTrace {
        y,
        calcium,
        spike_counts,
        spike_times,
    })
}
