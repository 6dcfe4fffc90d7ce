//! Functional-pruning dynamic program for l0-penalized deconvolution.
//!
//! The forward pass keeps, for every timestep `s`, the optimal cost of
//! explaining `y[..s]` as a function of the calcium level at `s`. Each piece
//! of that function is labeled with the most recent changepoint, so the
//! backward pass only has to read labels and minimizers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::piecewise::{
    add_quadratic_in_place, global_min, min_below, pointwise_min, prune_floor_in_place,
    running_min, scale_argument, CostFunction, Minimum, Quadratic,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Per-timestep calcium decay, in `(0, 1)`.
    pub gamma: T,
    /// Cost of one spike.
    pub lambda: T,
    /// Require every spike to be non-negative.
    pub constrained: bool,
    /// Smallest admissible calcium level.
    pub floor: T,
    /// Baseline subtracted from the trace before fitting.
    pub beta0: T,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn unconstrained(gamma: T, lambda: T) -> Self {
        Self {
            gamma,
            lambda,
            constrained: false,
            floor: T::default_floor(),
            beta0: T::zero(),
        }
    }

    pub fn constrained(gamma: T, lambda: T) -> Self {
        Self {
            constrained: true,
            ..Self::unconstrained(gamma, lambda)
        }
    }

    pub fn with_floor(mut self, floor: T) -> Self {
        self.floor = floor;
        self
    }

    pub fn with_beta0(mut self, beta0: T) -> Self {
        self.beta0 = beta0;
        self
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return Err(Error::InvalidGamma(self.gamma.to_f64().unwrap_or(f64::NAN)));
        }
        if !(self.lambda >= T::zero()) || self.lambda.is_infinite() {
            return Err(Error::InvalidConfig(format!(
                "penalty must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.floor > T::zero()) || self.floor.is_infinite() {
            return Err(Error::InvalidConfig(format!(
                "calcium floor must be positive, got {}",
                self.floor
            )));
        }
        if !self.beta0.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "intercept must be finite, got {}",
                self.beta0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike<T> {
    /// 1-based timestep of the jump.
    pub index: usize,
    /// `c[t] − γ·c[t−1]`.
    pub magnitude: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvolutionResult<T> {
    /// Last timestep of each segment except the final one (1-based, sorted).
    pub changepoints: Vec<usize>,
    pub spikes: Vec<Spike<T>>,
    pub calcium: Vec<T>,
    /// `½Σ(y − β₀ − c)² + λ·k` evaluated on `calcium`.
    pub objective: T,
    /// Number of pieces of the cost function at each timestep. Empty for
    /// solvers that do not build cost functions.
    pub region_stats: Vec<usize>,
}

impl<T: Scalar> DeconvolutionResult<T> {
    /// Assembles a result from a calcium path and its changepoints.
    /// `residual_target` is the trace with the intercept already removed.
    pub fn from_calcium(
        residual_target: &[T],
        calcium: Vec<T>,
        changepoints: Vec<usize>,
        gamma: T,
        lambda: T,
    ) -> Self {
        let spikes = changepoints
            .iter()
            .map(|&tau| Spike {
                index: tau + 1,
                magnitude: calcium[tau] - gamma * calcium[tau - 1],
            })
            .collect();
        let half = T::lit(0.5);
        let fit = residual_target
            .iter()
            .zip(&calcium)
            .fold(T::zero(), |acc, (&y, &c)| acc + half * (y - c) * (y - c));
        let k = T::from_usize(changepoints.len()).unwrap();
        Self {
            changepoints,
            spikes,
            calcium,
            objective: fit + lambda * k,
            region_stats: Vec::new(),
        }
    }

    pub fn num_spikes(&self) -> usize {
        self.spikes.len()
    }

    pub fn spike_indices(&self) -> Vec<usize> {
        self.spikes.iter().map(|s| s.index).collect()
    }
}

/// Largest number of pieces any cost function needed during the forward pass.
pub fn max_region_count<T>(result: &DeconvolutionResult<T>) -> usize {
    result.region_stats.iter().copied().max().unwrap_or(0)
}

fn check_trace<T: Scalar>(y: &[T]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// One step of the forward recursion: the optimal cost at timestep `label + 1`
/// from the one at `label`, given the (intercept-removed) observation there.
fn advance<T: Scalar>(
    prev: &CostFunction<T>,
    obs: T,
    label: usize,
    config: &SolverConfig<T>,
) -> Result<CostFunction<T>> {
    let mut carried = scale_argument(prev, config.gamma)?;
    prune_floor_in_place(&mut carried, config.floor)?;
    let fresh = if config.constrained {
        let mut fresh = running_min(&carried);
        add_quadratic_in_place(&mut fresh, &Quadratic::constant(config.lambda));
        fresh
    } else {
        let best = global_min(prev);
        CostFunction::single(
            Quadratic::constant(best.value + config.lambda),
            config.floor,
            label,
        )
    };
    let mut next = pointwise_min(&carried, &fresh, label);
    add_quadratic_in_place(&mut next, &Quadratic::point(obs));
    Ok(next)
}

fn first_function<T: Scalar>(target: &[T], config: &SolverConfig<T>) -> CostFunction<T> {
    CostFunction::single(Quadratic::point(target[0]), config.floor, 0)
}

fn prepare<T: Scalar>(y: &[T], config: &SolverConfig<T>) -> Result<Vec<T>> {
    config.validate()?;
    check_trace(y)?;
    Ok(y.iter().map(|&v| v - config.beta0).collect())
}

fn best_at<T: Scalar>(f: &CostFunction<T>, upper: T, constrained: bool) -> Minimum<T> {
    if constrained {
        min_below(f, upper)
    } else {
        global_min(f)
    }
}

/// Backward pass shared by the solvers. `best(end, upper)` returns the
/// minimum of the cost function at 1-based timestep `end`; in the constrained
/// problem the calcium just before a changepoint is bounded above by
/// `c[τ+1]/γ`, which is passed as `upper`.
fn backtrack<T: Scalar>(
    target: &[T],
    config: &SolverConfig<T>,
    mut best: impl FnMut(usize, T) -> Result<Minimum<T>>,
) -> Result<DeconvolutionResult<T>> {
    let gamma = config.gamma;
    let n = target.len();
    let mut calcium = vec![T::zero(); n];
    let mut changepoints = Vec::new();
    let mut upper = T::infinity();
    let mut cur = n;
    while cur > 0 {
        let end = cur;
        let found = best(end, upper)?;
        cur = found.label;
        let mut alpha = found.argmin;
        calcium[end - 1] = alpha;
        for t in (cur + 1..end).rev() {
            alpha = alpha / gamma;
            calcium[t - 1] = alpha;
        }
        if cur > 0 {
            changepoints.push(cur);
            upper = calcium[cur] / gamma;
        }
    }
    changepoints.reverse();
    Ok(DeconvolutionResult::from_calcium(
        target,
        calcium,
        changepoints,
        gamma,
        config.lambda,
    ))
}

/// Every optimal cost function of the forward pass.
#[derive(Debug, Clone)]
pub struct CostTable<T> {
    config: SolverConfig<T>,
    target: Vec<T>,
    functions: Vec<CostFunction<T>>,
}

impl<T: Scalar> CostTable<T> {
    /// Runs the forward recursion over `y`.
    pub fn build(y: &[T], config: &SolverConfig<T>) -> Result<Self> {
        let target = prepare(y, config)?;
        let mut functions = Vec::with_capacity(target.len());
        functions.push(first_function(&target, config));
        for (i, &obs) in target.iter().enumerate().skip(1) {
            let next = advance(functions.last().expect("initialized"), obs, i, config)?;
            functions.push(next);
        }
        Ok(Self {
            config: *config,
            target,
            functions,
        })
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.config
    }

    /// Optimal cost function at 1-based timestep `s`.
    pub fn function(&self, s: usize) -> &CostFunction<T> {
        &self.functions[s - 1]
    }

    pub fn functions(&self) -> &[CostFunction<T>] {
        &self.functions
    }

    /// `min_α Cost_T(α)`: the optimal objective as seen by the recursion.
    pub fn optimal_cost(&self) -> T {
        global_min(self.functions.last().expect("nonempty")).value
    }

    pub fn region_stats(&self) -> Vec<usize> {
        self.functions.iter().map(CostFunction::len).collect()
    }

    /// Backtracks changepoints and calcium from the stored functions.
    pub fn decode(&self) -> DeconvolutionResult<T> {
        let constrained = self.config.constrained;
        let mut result = backtrack(&self.target, &self.config, |end, upper| {
            Ok(best_at(&self.functions[end - 1], upper, constrained))
        })
        .expect("stored functions never fail to decode");
        result.region_stats = self.region_stats();
        result
    }
}

/// Total number of stored pieces above which [`solve`] stops keeping every
/// cost function and falls back to checkpoints (about 800 MB for `f64`).
pub const DEFAULT_PIECE_BUDGET: usize = 1 << 24;

/// Cost functions of the forward pass under a memory budget. While the total
/// piece count stays within budget every function is kept; past it, only
/// every `stride`-th function survives and the others are recomputed block
/// by block during the backward pass. Recomputation is deterministic, so the
/// result is bit-identical to keeping everything.
struct CheckpointStore<'a, T> {
    config: &'a SolverConfig<T>,
    target: &'a [T],
    stride: usize,
    stored: Vec<Option<CostFunction<T>>>,
    /// First timestep of the recomputed block and its functions.
    block: (usize, Vec<CostFunction<T>>),
}

impl<'a, T: Scalar> CheckpointStore<'a, T> {
    fn forward(
        target: &'a [T],
        config: &'a SolverConfig<T>,
        budget: usize,
    ) -> Result<(Self, Vec<usize>)> {
        let n = target.len();
        let stride = ((n as f64).sqrt().ceil() as usize).max(1);
        let is_checkpoint = |s: usize| (s - 1) % stride == 0;
        let mut stored: Vec<Option<CostFunction<T>>> = Vec::with_capacity(n);
        let mut region_stats = Vec::with_capacity(n);
        let mut total = 0usize;
        let mut thinned = false;

        let first = first_function(target, config);
        region_stats.push(first.len());
        total += first.len();
        stored.push(Some(first));
        for (i, &obs) in target.iter().enumerate().skip(1) {
            let next = advance(
                stored[i - 1].as_ref().expect("previous kept"),
                obs,
                i,
                config,
            )?;
            region_stats.push(next.len());
            total += next.len();
            stored.push(Some(next));
            if !thinned && total > budget {
                thinned = true;
                for (k, slot) in stored.iter_mut().enumerate().take(i) {
                    if !is_checkpoint(k + 1) {
                        *slot = None;
                    }
                }
            } else if thinned && !is_checkpoint(i) {
                stored[i - 1] = None;
            }
        }
        let store = Self {
            config,
            target,
            stride,
            stored,
            block: (0, Vec::new()),
        };
        Ok((store, region_stats))
    }

    fn get(&mut self, s: usize) -> Result<&CostFunction<T>> {
        if self.stored[s - 1].is_none() {
            let (start, ref block) = self.block;
            if !(start > 0 && s >= start && s < start + block.len()) {
                let from = 1 + (s - 1) / self.stride * self.stride;
                let mut functions = Vec::with_capacity(s - from + 1);
                functions.push(self.stored[from - 1].clone().expect("checkpoint kept"));
                for t in from + 1..=s {
                    let next = advance(
                        functions.last().expect("nonempty"),
                        self.target[t - 1],
                        t - 1,
                        self.config,
                    )?;
                    functions.push(next);
                }
                self.block = (from, functions);
            }
            return Ok(&self.block.1[s - self.block.0]);
        }
        Ok(self.stored[s - 1].as_ref().expect("checked above"))
    }
}

/// Globally optimal solution of the penalized problem for one trace.
pub fn solve<T: Scalar>(y: &[T], config: &SolverConfig<T>) -> Result<DeconvolutionResult<T>> {
    solve_with_budget(y, config, DEFAULT_PIECE_BUDGET)
}

/// [`solve`] with an explicit cap on the number of cost-function pieces kept
/// in memory between the forward and backward passes.
pub fn solve_with_budget<T: Scalar>(
    y: &[T],
    config: &SolverConfig<T>,
    piece_budget: usize,
) -> Result<DeconvolutionResult<T>> {
    let target = prepare(y, config)?;
    let (mut store, region_stats) = CheckpointStore::forward(&target, config, piece_budget)?;
    let constrained = config.constrained;
    let mut result = backtrack(&target, config, |end, upper| {
        Ok(best_at(store.get(end)?, upper, constrained))
    })?;
    result.region_stats = region_stats;
    Ok(result)
}

/// Solves once per intercept in `grid` and keeps the lowest objective.
/// Ties go to the smaller intercept.
pub fn solve_with_intercept<T: Scalar>(
    y: &[T],
    config: &SolverConfig<T>,
    grid: &[T],
) -> Result<(DeconvolutionResult<T>, T)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("intercept grid is empty".into()));
    }
    let solved: Vec<(T, DeconvolutionResult<T>)> = grid
        .par_iter()
        .map(|&b| solve(y, &config.with_beta0(b)).map(|r| (b, r)))
        .collect::<Result<_>>()?;
    let mut best: Option<(T, DeconvolutionResult<T>)> = None;
    for (b, r) in solved {
        let replace = match &best {
            None => true,
            Some((bb, br)) => {
                r.objective < br.objective || (r.objective == br.objective && b < *bb)
            }
        };
        if replace {
            best = Some((b, r));
        }
    }
    let (b, r) = best.expect("grid nonempty");
    Ok((r, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: [f64; 3] = [1.00, 0.98, 0.96];

    #[test]
    fn single_point_is_fit_exactly() {
        for lambda in [0.0, 0.3, 100.0] {
            let r = solve(&[2.0], &SolverConfig::unconstrained(0.9, lambda)).unwrap();
            assert!(r.changepoints.is_empty());
            assert_eq!(r.calcium, vec![2.0]);
            assert_eq!(r.objective, 0.0);
            assert_eq!(max_region_count(&r), 1);
        }
    }

    #[test]
    fn checkpointed_decode_matches_full_table() {
        let trace = crate::simulate::generate(&crate::simulate::SimulationConfig::new(
            700, 0.97, 0.2, 0.05, 9,
        ))
        .unwrap();
        for cfg in [
            SolverConfig::unconstrained(0.97, 0.5),
            SolverConfig::constrained(0.97, 0.5),
        ] {
            let full = CostTable::build(&trace.y, &cfg).unwrap().decode();
            for budget in [0, 50, 2000] {
                assert_eq!(solve_with_budget(&trace.y, &cfg, budget).unwrap(), full);
            }
        }
    }

    #[test]
    fn example_trace_has_no_changepoints() {
        for cfg in [
            SolverConfig::unconstrained(0.98, 0.5),
            SolverConfig::constrained(0.98, 0.5),
        ] {
            let r = solve(&EXAMPLE, &cfg).unwrap();
            assert!(r.changepoints.is_empty());
            assert!((r.objective - 5.4e-8).abs() < 1e-8, "{}", r.objective);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let y = [1.0, 2.0];
        assert_eq!(
            solve(&y, &SolverConfig::unconstrained(1.0, 1.0)),
            Err(Error::InvalidGamma(1.0))
        );
        assert!(matches!(
            solve(&y, &SolverConfig::unconstrained(0.5, -1.0)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            solve(&y, &SolverConfig::unconstrained(0.5, 1.0).with_floor(0.0)),
            Err(Error::InvalidConfig(_))
        ));
        assert_eq!(
            solve::<f64>(&[], &SolverConfig::unconstrained(0.5, 1.0)),
            Err(Error::EmptyTrace)
        );
        assert_eq!(
            solve(&[1.0, f64::NAN], &SolverConfig::unconstrained(0.5, 1.0)),
            Err(Error::NonFinite(1))
        );
    }

    #[test]
    fn obvious_jump_is_found() {
        let y = [0.1, 0.1, 5.0, 4.9];
        for cfg in [
            SolverConfig::unconstrained(0.98, 0.1),
            SolverConfig::constrained(0.98, 0.1),
        ] {
            let r = solve(&y, &cfg).unwrap();
            assert_eq!(r.changepoints, vec![2]);
            assert_eq!(r.spike_indices(), vec![3]);
            assert!(r.spikes[0].magnitude > 4.0);
        }
    }

    #[test]
    fn segments_decay_exactly() {
        let y = [3.0, 2.5, 2.2, 6.0, 5.1, 4.0, 3.9, 0.5];
        let gamma: f64 = 0.9;
        let r = solve(&y, &SolverConfig::unconstrained(gamma, 0.2)).unwrap();
        let mut bounds = vec![0];
        bounds.extend(&r.changepoints);
        bounds.push(y.len());
        for w in bounds.windows(2) {
            for t in w[0] + 1..w[1] {
                let ratio = r.calcium[t] / r.calcium[t - 1];
                assert!((ratio - gamma).abs() < 1e-12);
            }
        }
        assert_eq!(r.spikes.len(), r.changepoints.len());
    }

    #[test]
    fn intercept_grid_picks_the_exact_baseline() {
        let y: Vec<f64> = (0..30).map(|t| 5.0 + 0.98f64.powi(t)).collect();
        let cfg = SolverConfig::constrained(0.98, 0.5);
        let (r, b) = solve_with_intercept(&y, &cfg, &[0.0, 5.0]).unwrap();
        assert_eq!(b, 5.0);
        assert!(r.objective < 1e-12);
        let (_, b) = solve_with_intercept(&y, &cfg, &[4.9, 5.0, 5.1]).unwrap();
        assert_eq!(b, 5.0);
        let (single, b) = solve_with_intercept(&y, &cfg, &[0.0]).unwrap();
        assert_eq!(b, 0.0);
        assert_eq!(single, solve(&y, &cfg).unwrap());
        assert!(solve_with_intercept(&y, &cfg, &[]).is_err());
    }

    #[test]
    fn f32_solver_matches_f64_on_a_clear_jump() {
        let y32 = [0.2f32, 0.19, 0.18, 3.0, 2.9, 2.8];
        let y64: Vec<f64> = y32.iter().map(|&v| v as f64).collect();
        let r32 = solve(&y32, &SolverConfig::constrained(0.95f32, 0.1)).unwrap();
        let r64 = solve(&y64, &SolverConfig::constrained(0.95, 0.1)).unwrap();
        assert_eq!(r32.changepoints, r64.changepoints);
        assert!((r32.objective as f64 - r64.objective).abs() < 1e-4);
    }
}
