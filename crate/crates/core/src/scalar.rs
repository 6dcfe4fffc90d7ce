use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the piecewise algebra and the solver run on.
///
/// Tolerances are per-type: the defaults for `f64` are the ones the
/// algorithms were tuned for; `f32` gets looser values scaled to its epsilon.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Roots closer than this to an interval end are treated as the end itself.
    fn breakpoint_tol() -> Self;
    /// Absolute tolerance on coefficients when merging adjacent pieces.
    fn coeff_tol() -> Self;
    /// Two minima closer than this are a tie during decoding.
    fn tie_tol() -> Self;
    /// Smallest admissible calcium level.
    fn default_floor() -> Self;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl Scalar for f64 {
    fn breakpoint_tol() -> Self {
        1e-12
    }
    fn coeff_tol() -> Self {
        1e-12
    }
    fn tie_tol() -> Self {
        1e-12
    }
    fn default_floor() -> Self {
        1e-40
    }
}

impl Scalar for f32 {
    fn breakpoint_tol() -> Self {
        1e-6
    }
    fn coeff_tol() -> Self {
        1e-6
    }
    fn tie_tol() -> Self {
        1e-6
    }
    // 1e-40 is subnormal in f32.
    fn default_floor() -> Self {
        1e-30
    }
}
