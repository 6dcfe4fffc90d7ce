//! Exact l0-penalized spike deconvolution of calcium imaging traces.
//!
//! A fluorescence trace is modelled as `y[t] = β₀ + c[t] + noise` with
//! calcium `c[t] = γ·c[t−1] + z[t]`. The solver finds the calcium path that
//! minimizes `½Σ(y − β₀ − c)² + λ·#{t : z[t] ≠ 0}`, optionally with every
//! spike `z[t]` required to be non-negative, by dynamic programming over
//! piecewise-quadratic cost functions of the current calcium level.
//!
//! The piecewise algebra and the solver are generic over the floating point
//! type; the aliases below fix it to `f64`.

pub mod error;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod piecewise;
pub mod scalar;
pub mod simulate;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use metrics::{
    binned_correlation, van_rossum, victor_purpura, Metric, MetricParams, SpikeTrain,
};
pub use scalar::Scalar;
pub use simulate::{generate, SimulatedTrace, SimulationConfig};
pub use solver::{
    max_region_count, solve, solve_with_budget, solve_with_intercept, CostTable, Spike,
};
pub use tuning::{
    gamma_from_rate, split_train_test, tune_lambda, IndicatorClass, TuneOptions, TuneReport,
};

pub type Quadratic = piecewise::Quadratic<f64>;
pub type CostPiece = piecewise::CostPiece<f64>;
pub type CostFunction = piecewise::CostFunction<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type DeconvolutionResult = solver::DeconvolutionResult<f64>;

pub type Quadratic32 = piecewise::Quadratic<f32>;
pub type CostFunction32 = piecewise::CostFunction<f32>;
pub type SolverConfig32 = solver::SolverConfig<f32>;
pub type DeconvolutionResult32 = solver::DeconvolutionResult<f32>;
