//! Labeled piecewise-quadratic functions on a half line `[floor, ∞)`.
//!
//! Each piece stores the quadratic `a·α² + b·α + c` that is active on a
//! half-open interval together with the index of the most recent changepoint
//! that produces it. The solver builds one such function per timestep and
//! reads the labels back when decoding.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quadratic<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T: Scalar> Quadratic<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        Self { a, b, c }
    }

    pub fn constant(c: T) -> Self {
        Self::new(T::zero(), T::zero(), c)
    }

    /// `½(y − α)²` expanded.
    pub fn point(y: T) -> Self {
        let half = T::lit(0.5);
        Self::new(half, -y, half * y * y)
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        (self.a * x + self.b) * x + self.c
    }

    #[inline]
    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.a + other.a, self.b + other.b, self.c + other.c)
    }

    #[inline]
    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.a - other.a, self.b - other.b, self.c - other.c)
    }

    /// Coefficients of `α ↦ q(α/γ)`.
    #[inline]
    pub fn scale_argument(&self, gamma: T) -> Self {
        Self::new(self.a / (gamma * gamma), self.b / gamma, self.c)
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        (self.a - other.a).abs() <= tol
            && (self.b - other.b).abs() <= tol
            && (self.c - other.c).abs() <= tol
    }

    /// Minimizer and minimum over the closed interval `[lo, hi]`; `hi` may be `+∞`.
    pub fn minimize(&self, lo: T, hi: T) -> Result<(T, T)> {
        if !(lo < hi) {
            return Err(Error::InvalidInterval {
                lo: lo.to_f64().unwrap_or(f64::NAN),
                hi: hi.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(self.minimize_unchecked(lo, hi))
    }

    fn minimize_unchecked(&self, lo: T, hi: T) -> (T, T) {
        let zero = T::zero();
        if self.a > zero {
            let v = -self.b / (self.a + self.a);
            let x = if v <= lo {
                lo
            } else if v >= hi {
                hi
            } else {
                v
            };
            return (x, self.eval(x));
        }
        if self.b < zero {
            if hi.is_infinite() {
                return (hi, T::neg_infinity());
            }
            return (hi, self.eval(hi));
        }
        (lo, self.eval(lo))
    }

    /// Real roots of `q(x) = 0` in ascending order.
    fn roots(&self) -> ([T; 2], usize) {
        let zero = T::zero();
        let (a, b, c) = (self.a, self.b, self.c);
        if a == zero {
            if b == zero {
                return ([zero, zero], 0);
            }
            return ([-c / b, zero], 1);
        }
        let disc = b * b - T::lit(4.0) * a * c;
        if disc < zero {
            return ([zero, zero], 0);
        }
        if disc == zero {
            return ([-b / (a + a), zero], 1);
        }
        let sq = disc.sqrt();
        let q = if b < zero {
            T::lit(-0.5) * (b - sq)
        } else {
            T::lit(-0.5) * (b + sq)
        };
        let r1 = q / a;
        let r2 = c / q;
        if r1 <= r2 {
            ([r1, r2], 2)
        } else {
            ([r2, r1], 2)
        }
    }
}

/// Expands `½(y − α)²`.
pub fn point_quadratic<T: Scalar>(y: T) -> Quadratic<T> {
    Quadratic::point(y)
}

/// Minimizer of `q` over `[lo, hi]`. For a linear `q` this is the better
/// endpoint (`lo` when `q` is constant).
pub fn quad_min<T: Scalar>(q: &Quadratic<T>, lo: T, hi: T) -> Result<(T, T)> {
    q.minimize(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPiece<T> {
    pub lo: T,
    pub hi: T,
    pub quad: Quadratic<T>,
    pub label: usize,
}

/// Minimum of a cost function together with the label of the piece attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<T> {
    pub label: usize,
    pub argmin: T,
    pub value: T,
}

/// Piecewise quadratic on `[floor, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction<T> {
    pieces: Vec<CostPiece<T>>,
    floor: T,
}

impl<T: Scalar> CostFunction<T> {
    /// A single quadratic on the whole domain.
    pub fn single(quad: Quadratic<T>, floor: T, label: usize) -> Self {
        Self {
            pieces: vec![CostPiece {
                lo: floor,
                hi: T::infinity(),
                quad,
                label,
            }],
            floor,
        }
    }

    /// Builds a function from raw pieces, validating coverage and ordering.
    pub fn from_pieces(pieces: Vec<CostPiece<T>>) -> Result<Self> {
        let floor = pieces.first().ok_or(Error::EmptyFunction)?.lo;
        let f = Self { pieces, floor };
        f.check_structure().map_err(Error::InvalidConfig)?;
        Ok(f)
    }

    pub fn pieces(&self) -> &[CostPiece<T>] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn floor(&self) -> T {
        self.floor
    }

    /// Index of the piece containing `x`; values below the floor map to the first piece.
    pub fn piece_index(&self, x: T) -> usize {
        let idx = self.pieces.partition_point(|p| p.hi <= x);
        idx.min(self.pieces.len() - 1)
    }

    pub fn eval(&self, x: T) -> T {
        self.pieces[self.piece_index(x)].quad.eval(x)
    }

    pub fn label_at(&self, x: T) -> usize {
        self.pieces[self.piece_index(x)].label
    }

    /// Largest finite breakpoint (the floor for a single piece).
    pub fn max_breakpoint(&self) -> T {
        self.pieces
            .iter()
            .map(|p| p.lo)
            .fold(self.floor, |m, v| if v > m { v } else { m })
    }

    /// Coverage, ordering and non-degeneracy of the pieces.
    pub fn check_structure(&self) -> std::result::Result<(), String> {
        let first = self.pieces.first().ok_or("no pieces")?;
        if first.lo != self.floor {
            return Err(format!(
                "first piece starts at {} not at floor {}",
                first.lo, self.floor
            ));
        }
        let last = self.pieces.last().unwrap();
        if !(last.hi.is_infinite() && last.hi > T::zero()) {
            return Err(format!("last piece ends at {}", last.hi));
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if !(p.lo < p.hi) {
                return Err(format!("piece {i} is empty: [{}, {})", p.lo, p.hi));
            }
            if i > 0 && self.pieces[i - 1].hi != p.lo {
                return Err(format!(
                    "gap between piece {} (hi {}) and piece {i} (lo {})",
                    i - 1,
                    self.pieces[i - 1].hi,
                    p.lo
                ));
            }
        }
        Ok(())
    }

    /// Largest jump of the function across an interior breakpoint, relative
    /// to the magnitude of the values there.
    pub fn max_discontinuity(&self) -> T {
        self.pieces
            .windows(2)
            .map(|w| {
                let x = w[0].hi;
                let l = w[0].quad.eval(x);
                let r = w[1].quad.eval(x);
                (l - r).abs() / T::one().max(l.abs()).max(r.abs())
            })
            .fold(T::zero(), |m, v| if v > m { v } else { m })
    }

    /// One piece per line: `lo,hi,a,b,c,label`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for p in &self.pieces {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.lo, p.hi, p.quad.a, p.quad.b, p.quad.c, p.label
            );
        }
        out
    }

    /// Parses the output of [`CostFunction::dump`].
    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut pieces = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Parse(format!("line {}: expected 6 fields", n + 1)));
            }
            let num = |s: &str| -> Result<T> {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .and_then(T::from_f64)
                    .ok_or_else(|| Error::Parse(format!("line {}: bad number {s:?}", n + 1)))
            };
            let label = fields[5]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("line {}: bad label", n + 1)))?;
            pieces.push(CostPiece {
                lo: num(fields[0])?,
                hi: num(fields[1])?,
                quad: Quadratic::new(num(fields[2])?, num(fields[3])?, num(fields[4])?),
                label,
            });
        }
        Self::from_pieces(pieces)
    }
}

/// Appends a piece, merging it into the previous one when they are contiguous
/// and carry the same label and (numerically) the same quadratic.
fn push_merge<T: Scalar>(out: &mut Vec<CostPiece<T>>, piece: CostPiece<T>) {
    if !(piece.lo < piece.hi) {
        return;
    }
    if let Some(prev) = out.last_mut() {
        if prev.label == piece.label
            && prev.hi == piece.lo
            && prev.quad.approx_eq(&piece.quad, T::coeff_tol())
        {
            prev.hi = piece.hi;
            return;
        }
    }
    out.push(piece);
}

fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if gamma > T::zero() && gamma < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidGamma(gamma.to_f64().unwrap_or(f64::NAN)))
    }
}

/// `g(α) = f(α/γ)`. Breakpoints and the floor are multiplied by `γ`.
pub fn scale_argument<T: Scalar>(f: &CostFunction<T>, gamma: T) -> Result<CostFunction<T>> {
    check_gamma(gamma)?;
    let pieces = f
        .pieces
        .iter()
        .map(|p| CostPiece {
            lo: p.lo * gamma,
            hi: p.hi * gamma,
            quad: p.quad.scale_argument(gamma),
            label: p.label,
        })
        .collect();
    Ok(CostFunction {
        pieces,
        floor: f.floor * gamma,
    })
}

/// Adds `q` to every piece.
pub fn add_quadratic<T: Scalar>(f: &CostFunction<T>, q: &Quadratic<T>) -> CostFunction<T> {
    let mut g = f.clone();
    add_quadratic_in_place(&mut g, q);
    g
}

pub(crate) fn add_quadratic_in_place<T: Scalar>(f: &mut CostFunction<T>, q: &Quadratic<T>) {
    for p in &mut f.pieces {
        p.quad = p.quad.add(q);
    }
}

/// `h(α) = min(f(α), g(α))`. Pieces where `g` is strictly smaller take
/// `label_for_g`; elsewhere `f`'s pieces and labels are kept.
pub fn pointwise_min<T: Scalar>(
    f: &CostFunction<T>,
    g: &CostFunction<T>,
    label_for_g: usize,
) -> CostFunction<T> {
    let tol = T::breakpoint_tol();
    let mut out: Vec<CostPiece<T>> = Vec::with_capacity(f.len() + g.len() + 2);
    let (mut i, mut j) = (0usize, 0usize);
    let mut lo = f.floor.max(g.floor);
    // Skip pieces that end at or below the common start.
    while i < f.pieces.len() && f.pieces[i].hi <= lo {
        i += 1;
    }
    while j < g.pieces.len() && g.pieces[j].hi <= lo {
        j += 1;
    }
    while i < f.pieces.len() && j < g.pieces.len() {
        let fp = &f.pieces[i];
        let gp = &g.pieces[j];
        let hi = fp.hi.min(gp.hi);
        let diff = fp.quad.sub(&gp.quad);

        let (roots, n) = diff.roots();
        let mut cuts = [lo, lo, lo, hi];
        let mut m = 1;
        for &r in &roots[..n] {
            if r > lo + tol && r < hi - tol && r > cuts[m - 1] {
                cuts[m] = r;
                m += 1;
            }
        }
        cuts[m] = hi;
        for k in 0..m {
            let (l, r) = (cuts[k], cuts[k + 1]);
            if !(l < r) {
                continue;
            }
            let probe = if r.is_infinite() {
                l + T::one().max(l.abs())
            } else {
                l + (r - l) * T::lit(0.5)
            };
            // Incumbent wins ties.
            let piece = if diff.eval(probe) <= T::zero() {
                CostPiece {
                    lo: l,
                    hi: r,
                    quad: fp.quad,
                    label: fp.label,
                }
            } else {
                CostPiece {
                    lo: l,
                    hi: r,
                    quad: gp.quad,
                    label: label_for_g,
                }
            };
            push_merge(&mut out, piece);
        }

        if fp.hi == hi {
            i += 1;
        }
        if gp.hi == hi {
            j += 1;
        }
        lo = hi;
        if lo.is_infinite() {
            break;
        }
    }
    CostFunction {
        pieces: out,
        floor: f.floor.max(g.floor),
    }
}

/// `g(α) = min_{floor ≤ α' ≤ α} f(α')`.
///
/// Stretches where `g` is flat carry the label of the piece where the running
/// minimum was attained.
pub fn running_min<T: Scalar>(f: &CostFunction<T>) -> CostFunction<T> {
    let zero = T::zero();
    let mut out: Vec<CostPiece<T>> = Vec::with_capacity(f.len() + 2);
    let mut best = T::infinity();
    let mut best_label = 0usize;
    for p in &f.pieces {
        let q = p.quad;
        let (l, r) = (p.lo, p.hi);
        // End of the non-increasing part of q within [l, r].
        let turn = if q.a > zero {
            let v = -q.b / (q.a + q.a);
            if v <= l {
                l
            } else if v >= r {
                r
            } else {
                v
            }
        } else if q.b < zero {
            r
        } else {
            l
        };
        let low_val = if turn.is_infinite() {
            T::neg_infinity()
        } else {
            q.eval(turn)
        };
        if !(low_val < best) {
            push_merge(
                &mut out,
                CostPiece {
                    lo: l,
                    hi: r,
                    quad: Quadratic::constant(best),
                    label: best_label,
                },
            );
            continue;
        }
        // First point in [l, turn] where q drops below the running best.
        let start = if q.eval(l) <= best {
            l
        } else {
            let shifted = Quadratic::new(q.a, q.b, q.c - best);
            let (roots, n) = shifted.roots();
            let mut x = turn;
            for &root in &roots[..n] {
                if root >= l && root <= turn {
                    x = root;
                    break;
                }
            }
            x
        };
        if start > l {
            push_merge(
                &mut out,
                CostPiece {
                    lo: l,
                    hi: start,
                    quad: Quadratic::constant(best),
                    label: best_label,
                },
            );
        }
        push_merge(
            &mut out,
            CostPiece {
                lo: start,
                hi: turn,
                quad: q,
                label: p.label,
            },
        );
        if turn < r {
            push_merge(
                &mut out,
                CostPiece {
                    lo: turn,
                    hi: r,
                    quad: Quadratic::constant(low_val),
                    label: p.label,
                },
            );
        }
        best = low_val;
        best_label = p.label;
    }
    CostFunction {
        pieces: out,
        floor: f.floor,
    }
}

/// Global minimum; ties within the decode tolerance go to the smaller label.
pub fn global_min<T: Scalar>(f: &CostFunction<T>) -> Minimum<T> {
    min_below(f, T::infinity())
}

/// Minimum over `[floor, upper]`; ties go to the smaller label.
pub fn min_below<T: Scalar>(f: &CostFunction<T>, upper: T) -> Minimum<T> {
    let tol = T::tie_tol();
    let mut best: Option<Minimum<T>> = None;
    for p in &f.pieces {
        if p.lo > upper || (p.lo == upper && best.is_some()) {
            break;
        }
        let hi = p.hi.min(upper);
        let (x, v) = if p.lo < hi {
            p.quad.minimize_unchecked(p.lo, hi)
        } else {
            (p.lo, p.quad.eval(p.lo))
        };
        let better = match &best {
            None => true,
            Some(b) => v < b.value - tol || ((v - b.value).abs() <= tol && p.label < b.label),
        };
        if better {
            best = Some(Minimum {
                label: p.label,
                argmin: x,
                value: v,
            });
        }
    }
    best.expect("cost function has at least one piece")
}

/// Drops pieces lying entirely below `rho` and clips the first survivor to start at `rho`.
pub fn prune_floor<T: Scalar>(f: &CostFunction<T>, rho: T) -> Result<CostFunction<T>> {
    let mut g = f.clone();
    prune_floor_in_place(&mut g, rho)?;
    Ok(g)
}

pub(crate) fn prune_floor_in_place<T: Scalar>(f: &mut CostFunction<T>, rho: T) -> Result<()> {
    if f.floor >= rho {
        return Ok(());
    }
    let drop = f.pieces.partition_point(|p| p.hi <= rho);
    f.pieces.drain(..drop);
    let first = f.pieces.first_mut().ok_or(Error::EmptyFunction)?;
    first.lo = rho;
    f.floor = rho;
    Ok(())
}
