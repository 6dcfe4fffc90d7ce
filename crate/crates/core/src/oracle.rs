//! Slow reference solvers: the quadratic-time optimal partitioning recursion
//! and brute-force enumeration of changepoint sets.
//!
//! Both restrict segment calcium to `[floor, ∞)`, the same domain the
//! functional solver works on.

use crate::error::{Error, Result};
use crate::solver::{DeconvolutionResult, SolverConfig};

/// Largest trace the exhaustive oracle accepts.
pub const EXHAUSTIVE_MAX_LEN: usize = 16;

/// Least-squares fit of one exponentially decaying segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentFit {
    /// First timestep (1-based, inclusive).
    pub start: usize,
    /// Last timestep (1-based, inclusive).
    pub end: usize,
    /// Fitted calcium at `end`.
    pub end_value: f64,
    pub cost: f64,
}

fn residual_cost(y: &[f64], start: usize, end: usize, gamma: f64, end_value: f64) -> f64 {
    let mut level = end_value;
    let mut cost = 0.0;
    for t in (start..=end).rev() {
        let r = y[t - 1] - level;
        cost += 0.5 * r * r;
        level /= gamma;
    }
    cost
}

/// Closed-form fit of `y[start..=end]` (1-based) by `α·γ^(t−end)`.
///
/// Computed through the level at `start` so the weights `γ^(t−start)` stay
/// bounded for long segments.
pub fn segment_cost(y: &[f64], start: usize, end: usize, gamma: f64) -> SegmentFit {
    assert!(
        1 <= start && start <= end && end <= y.len(),
        "segment out of range"
    );
    let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
    for t in start..=end {
        num += y[t - 1] * w;
        den += w * w;
        w *= gamma;
    }
    let end_value = num / den * gamma.powi((end - start) as i32);
    SegmentFit {
        start,
        end,
        end_value,
        cost: residual_cost(y, start, end, gamma, end_value),
    }
}

/// As [`segment_cost`] but with the fitted level held at or above `floor`.
pub fn segment_cost_floored(
    y: &[f64],
    start: usize,
    end: usize,
    gamma: f64,
    floor: f64,
) -> SegmentFit {
    let fit = segment_cost(y, start, end, gamma);
    if fit.end_value >= floor {
        return fit;
    }
    SegmentFit {
        end_value: floor,
        cost: residual_cost(y, start, end, gamma, floor),
        ..fit
    }
}

fn check_input(y: &[f64], cfg: &SolverConfig<f64>) -> Result<Vec<f64>> {
    cfg.validate()?;
    if y.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(y.iter().map(|v| v - cfg.beta0).collect())
}

fn fill_segment(calcium: &mut [f64], start: usize, end: usize, end_value: f64, gamma: f64) {
    let mut level = end_value;
    for t in (start..=end).rev() {
        calcium[t - 1] = level;
        level /= gamma;
    }
}

/// `F(s) = min_τ F(τ) + D(y[τ+1..=s]) + λ` with `F(0) = −λ`.
///
/// Only the unconstrained problem has this form: a changepoint there
/// decouples the segments on either side.
pub fn op_solve(y: &[f64], cfg: &SolverConfig<f64>) -> Result<DeconvolutionResult<f64>> {
    if cfg.constrained {
        return Err(Error::Unsupported(
            "optimal partitioning cannot enforce non-negative spikes".into(),
        ));
    }
    let target = check_input(y, cfg)?;
    let n = target.len();
    let (gamma, lambda, floor) = (cfg.gamma, cfg.lambda, cfg.floor);

    let mut best = vec![f64::INFINITY; n + 1];
    let mut last = vec![0usize; n + 1];
    best[0] = -lambda;
    // best[tau] is final once every earlier tau has pushed its candidates.
    for tau in 0..n {
        let base = best[tau] + lambda;
        // Running sums over y[tau+1..=s] with weights γ^(t−tau−1).
        let (mut syy, mut syw, mut sww, mut w) = (0.0, 0.0, 0.0, 1.0);
        for s in tau + 1..=n {
            let obs = target[s - 1];
            syy += obs * obs;
            syw += obs * w;
            sww += w * w;
            // Weight of y[s] relative to the segment start.
            let last_w = w;
            w *= gamma;
            let mut start_level = syw / sww;
            if start_level * last_w < floor {
                start_level = floor / last_w;
            }
            let seg = if start_level.is_finite() {
                0.5 * (syy - 2.0 * start_level * syw + start_level * start_level * sww)
            } else {
                f64::INFINITY
            };
            let cand = base + seg;
            // Strict `<` keeps the earliest changepoint on ties.
            if cand < best[s] {
                best[s] = cand;
                last[s] = tau;
            }
        }
    }

    let mut calcium = vec![0.0; n];
    let mut changepoints = Vec::new();
    let mut end = n;
    while end > 0 {
        let start = last[end] + 1;
        let fit = segment_cost_floored(&target, start, end, gamma, floor);
        fill_segment(&mut calcium, start, end, fit.end_value, gamma);
        if last[end] > 0 {
            changepoints.push(last[end]);
        }
        end = last[end];
    }
    changepoints.reverse();
    Ok(DeconvolutionResult::from_calcium(
        &target,
        calcium,
        changepoints,
        gamma,
        lambda,
    ))
}

/// Enumerates every changepoint set.
///
/// For the constrained problem each set is a small quadratic program in the
/// segment levels. It is solved by enumerating which of the jump constraints
/// `c[τ+1] ≥ γ·c[τ]` are active: an active constraint ties two neighbouring
/// segments into one decaying block, which is then fitted in closed form,
/// and the feasible candidate with the lowest cost wins.
pub fn exhaustive_solve(y: &[f64], cfg: &SolverConfig<f64>) -> Result<DeconvolutionResult<f64>> {
    let target = check_input(y, cfg)?;
    let n = target.len();
    if n > EXHAUSTIVE_MAX_LEN {
        return Err(Error::TooLarge {
            len: n,
            max: EXHAUSTIVE_MAX_LEN,
        });
    }
    let (gamma, lambda, floor) = (cfg.gamma, cfg.lambda, cfg.floor);

    // fits[a][b] for 1 ≤ a ≤ b ≤ n.
    let mut fits = vec![vec![None; n + 1]; n + 1];
    for a in 1..=n {
        for b in a..=n {
            fits[a][b] = Some(segment_cost_floored(&target, a, b, gamma, floor));
        }
    }
    let fit = |a: usize, b: usize| fits[a][b].expect("a <= b");

    let tie = 1e-12;
    let mut best_value = f64::INFINITY;
    let mut best_cps: Vec<usize> = Vec::new();
    let mut best_calcium = vec![0.0; n];
    let mut calcium = vec![0.0; n];

    for mask in 0u32..(1u32 << (n - 1)) {
        let cps: Vec<usize> = (1..n).filter(|&t| mask & (1 << (t - 1)) != 0).collect();
        let k = cps.len();
        let penalty = lambda * k as f64;
        let mut bounds = Vec::with_capacity(k + 2);
        bounds.push(0);
        bounds.extend(&cps);
        bounds.push(n);

        let (value, levels) = if !cfg.constrained {
            let mut cost = 0.0;
            for w in bounds.windows(2) {
                let f = fit(w[0] + 1, w[1]);
                cost += f.cost;
                fill_segment(&mut calcium, f.start, f.end, f.end_value, gamma);
            }
            (cost + penalty, true)
        } else {
            let mut local_best = f64::INFINITY;
            let mut local_calcium = vec![0.0; n];
            for active in 0u32..(1u32 << k) {
                // Blocks: segments merged across active constraints.
                let mut cost = 0.0;
                let mut block_start = 1;
                for j in 0..=k {
                    let seg_end = bounds[j + 1];
                    let merged_forward = j < k && active & (1 << j) != 0;
                    if !merged_forward {
                        let f = fit(block_start, seg_end);
                        cost += f.cost;
                        fill_segment(&mut calcium, block_start, seg_end, f.end_value, gamma);
                        block_start = seg_end + 1;
                    }
                }
                if cost >= local_best {
                    continue;
                }
                let feasible = cps.iter().enumerate().all(|(j, &tau)| {
                    if active & (1 << j) != 0 {
                        return true;
                    }
                    let jump = calcium[tau] - gamma * calcium[tau - 1];
                    jump >= -tie * calcium[tau].abs().max(1.0)
                });
                if feasible {
                    local_best = cost;
                    local_calcium.copy_from_slice(&calcium);
                }
            }
            calcium.copy_from_slice(&local_calcium);
            (local_best + penalty, local_best.is_finite())
        };
        if !levels {
            continue;
        }
        let better =
            value < best_value - tie || ((value - best_value).abs() <= tie && k < best_cps.len());
        if better {
            best_value = value;
            best_cps = cps;
            best_calcium.copy_from_slice(&calcium);
        }
    }

    Ok(DeconvolutionResult::from_calcium(
        &target,
        best_calcium,
        best_cps,
        gamma,
        lambda,
    ))
}
