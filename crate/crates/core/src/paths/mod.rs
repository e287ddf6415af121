//! Right-continuous step paths on a finite time grid, and the path-space
//! operations used by functionals: stopping, vertical perturbation, time
//! reversal, coordinate replacement and the `d*` pseudo-distance.
//!
//! Between knots a path is constant. Each knot additionally stores the left
//! limit `x(t_k-)`; it equals the knot value except at recorded jumps. This
//! makes a knot without a jump a continuity point, which is the reading the
//! Brownian and drift components need.

mod csv_io;
mod view;

use smallvec::SmallVec;
use std::sync::{Arc, OnceLock};

pub use view::PathView;

/// Vector type used for short, stack-allocated state vectors.
pub type Vector = SmallVec<[f64; 6]>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("time {t} outside [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coordinate index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("horizon mismatch: {0} vs {1}")]
    HorizonMismatch(f64, f64),
    #[error("invalid path data: {0}")]
    Invalid(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
}

/// Strictly increasing knots `0 = t_0 < ... < t_K = T` with `K >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    knots: Arc<[f64]>,
}

impl TimeGrid {
    pub fn new(knots: Vec<f64>) -> Result<Self, PathError> {
        if knots.len() < 2 {
            return Err(PathError::InvalidGrid("need at least two knots".into()));
        }
        if knots[0] != 0.0 {
            return Err(PathError::InvalidGrid("first knot must be 0".into()));
        }
        for w in knots.windows(2) {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(PathError::InvalidGrid(format!(
                    "knots must be finite and strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { knots: knots.into() })
    }

    /// `steps` equal cells on `[0, horizon]`; the last knot is exactly `horizon`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self, PathError> {
        if steps == 0 || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(PathError::InvalidGrid(format!(
                "uniform grid needs steps >= 1 and a positive horizon (got {steps}, {horizon})"
            )));
        }
        let k = steps as f64;
        let mut knots: Vec<f64> = (0..=steps).map(|i| horizon * (i as f64 / k)).collect();
        knots[steps] = horizon;
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn knot(&self, k: usize) -> f64 {
        self.knots[k]
    }

    /// Number of knots, `K + 1`.
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of cells `K`.
    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Index of `t` if it is exactly a knot.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.knots.binary_search_by(|k| k.total_cmp(&t)).ok()
    }

    /// Largest `k` with `t_k <= t`; times before 0 map to 0.
    pub fn locate(&self, t: f64) -> usize {
        let p = self.knots.partition_point(|&k| k <= t);
        p.saturating_sub(1)
    }

    /// Index of the last knot strictly before `t`, if any.
    pub fn before(&self, t: f64) -> Option<usize> {
        let p = self.knots.partition_point(|&k| k < t);
        p.checked_sub(1)
    }

    fn check(&self, t: f64) -> Result<(), PathError> {
        if t >= 0.0 && t <= self.horizon() {
            Ok(())
        } else {
            Err(PathError::Domain { t, horizon: self.horizon() })
        }
    }
}

#[derive(Debug, Clone)]
struct Prefix {
    integral: Vec<f64>,
    max: Vec<f64>,
    min: Vec<f64>,
}

/// A `d`-dimensional càdlàg step path.
#[derive(Debug, Clone)]
pub struct CadlagPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    left: Vec<f64>,
    jump: Vec<bool>,
    prefix: OnceLock<Prefix>,
}

impl PartialEq for CadlagPath {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.dim == other.dim
            && self.values == other.values
            && self.left == other.left
            && self.jump == other.jump
    }
}

impl CadlagPath {
    /// Builds a path from knot values, left limits and jump flags (all
    /// knot-major). Non-jump knots must have `left == value`; knot 0 cannot
    /// carry a jump.
    pub fn from_parts(
        grid: TimeGrid,
        dim: usize,
        values: Vec<f64>,
        left: Vec<f64>,
        jump: Vec<bool>,
    ) -> Result<Self, PathError> {
        let n = grid.len();
        if values.len() != n * dim || left.len() != n * dim || jump.len() != n {
            return Err(PathError::Invalid(format!(
                "expected {} values, {} left limits and {} flags; got {}, {}, {}",
                n * dim,
                n * dim,
                n,
                values.len(),
                left.len(),
                jump.len()
            )));
        }
        if values.iter().chain(&left).any(|v| !v.is_finite()) {
            return Err(PathError::Invalid("non-finite value".into()));
        }
        if jump[0] {
            return Err(PathError::Invalid("a jump at time 0 is not allowed".into()));
        }
        for k in 0..n {
            if !jump[k] && values[k * dim..(k + 1) * dim] != left[k * dim..(k + 1) * dim] {
                return Err(PathError::Invalid(format!(
                    "knot {k} has a left limit different from its value but is not a jump"
                )));
            }
        }
        Ok(Self { grid, dim, values, left, jump, prefix: OnceLock::new() })
    }

    /// A path with no jumps: every knot is a continuity point.
    pub fn continuous(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self, PathError> {
        let n = grid.len();
        Self::from_parts(grid, dim, values.clone(), values, vec![false; n])
    }

    pub fn constant(grid: TimeGrid, v: &[f64]) -> Self {
        let n = grid.len();
        let values: Vec<f64> = (0..n).flat_map(|_| v.iter().copied()).collect();
        Self::continuous(grid, v.len(), values).expect("constant path")
    }

    /// Samples `f` at the knots, producing a jump-free path.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; grid.len() * dim];
        for (k, chunk) in values.chunks_mut(dim.max(1)).enumerate().take(grid.len()) {
            f(grid.knot(k), &mut chunk[..dim]);
        }
        Self::continuous(grid, dim, values).expect("finite values")
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// Knot values, knot-major (`values[k * d + i]`).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_values(&self) -> &[f64] {
        &self.left
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Left limit `x(t_k-)` at knot `k`.
    pub fn left(&self, k: usize) -> &[f64] {
        &self.left[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_jump(&self, k: usize) -> bool {
        self.jump[k]
    }

    /// `x(t_k) - x(t_k-)`.
    pub fn jump(&self, k: usize) -> Vector {
        self.value(k).iter().zip(self.left(k)).map(|(a, b)| a - b).collect()
    }

    /// Indices of knots carrying a recorded jump.
    pub fn jump_knots(&self) -> impl Iterator<Item = usize> + '_ {
        self.jump.iter().enumerate().filter(|(_, &j)| j).map(|(k, _)| k)
    }

    /// Right-continuous evaluation; times outside `[0, T]` are clamped.
    pub fn at(&self, t: f64) -> &[f64] {
        self.value(self.grid.locate(t))
    }

    /// `x(t-)`, with `x(0-) = x(0)`.
    pub fn left_limit(&self, t: f64) -> &[f64] {
        match self.grid.index_of(t) {
            Some(k) => self.left(k),
            None => self.at(t),
        }
    }

    fn prefix(&self) -> &Prefix {
        self.prefix.get_or_init(|| {
            let d = self.dim;
            let n = self.grid.len();
            let mut integral = vec![0.0; n * d];
            let mut max = self.values.clone();
            let mut min = self.values.clone();
            for k in 1..n {
                let dt = self.grid.knot(k) - self.grid.knot(k - 1);
                for i in 0..d {
                    integral[k * d + i] = integral[(k - 1) * d + i] + self.values[(k - 1) * d + i] * dt;
                    max[k * d + i] = max[k * d + i].max(max[(k - 1) * d + i]);
                    min[k * d + i] = min[k * d + i].min(min[(k - 1) * d + i]);
                }
            }
            Prefix { integral, max, min }
        })
    }

    /// `∫_0^t x^i(s) ds` of the step path.
    pub fn integral(&self, i: usize, t: f64) -> f64 {
        let k = self.grid.locate(t);
        let p = self.prefix();
        p.integral[k * self.dim + i] + (t - self.grid.knot(k)) * self.values[k * self.dim + i]
    }

    /// Maximum of coordinate `i` over knots `0..=k`.
    pub fn prefix_max(&self, i: usize, k: usize) -> f64 {
        self.prefix().max[k * self.dim + i]
    }

    pub fn prefix_min(&self, i: usize, k: usize) -> f64 {
        self.prefix().min[k * self.dim + i]
    }

    /// The whole path seen as a functional argument.
    pub fn view(&self) -> PathView<'_> {
        let t = self.horizon();
        PathView::new(self, t, self.value(self.grid.steps()).into())
    }

    /// `x_{∧t}` without materialising a new path.
    pub fn stopped_view(&self, t: f64) -> PathView<'_> {
        PathView::new(self, t, self.at(t).into())
    }

    /// `x_{∧t-}`: the path on `[0, t)` held at its left limit from `t` on.
    pub fn left_stopped_view(&self, t: f64) -> PathView<'_> {
        PathView::new(self, t, self.left_limit(t).into())
    }

    /// Materialises the path that follows `self` on `[0, t)` and equals
    /// `terminal` from `t` on. `t` is inserted as a knot if necessary.
    fn frozen(&self, t: f64, terminal: &[f64], keep_flag: bool) -> CadlagPath {
        let d = self.dim;
        let (j, existing) = match self.grid.index_of(t) {
            Some(j) => (j, true),
            None => (self.grid.locate(t) + 1, false),
        };
        let mut knots: Vec<f64> = self.grid.knots()[..j].to_vec();
        knots.push(t);
        let tail_start = if existing { j + 1 } else { j };
        knots.extend_from_slice(&self.grid.knots()[tail_start..]);
        let n = knots.len();
        let mut values = Vec::with_capacity(n * d);
        let mut left = Vec::with_capacity(n * d);
        let mut jump = Vec::with_capacity(n);
        values.extend_from_slice(&self.values[..j * d]);
        left.extend_from_slice(&self.left[..j * d]);
        jump.extend_from_slice(&self.jump[..j]);
        let lim: Vector = if j == 0 { terminal.into() } else { self.left_limit(t).into() };
        values.extend_from_slice(terminal);
        left.extend_from_slice(&lim);
        let flag_here = existing && keep_flag && self.jump[j] && terminal == self.value(j);
        jump.push(j > 0 && (flag_here || lim.as_slice() != terminal));
        for _ in (j + 1)..n {
            values.extend_from_slice(terminal);
            left.extend_from_slice(terminal);
            jump.push(false);
        }
        let grid = if existing { self.grid.clone() } else { TimeGrid::new(knots).expect("refined grid") };
        CadlagPath { grid, dim: d, values, left, jump, prefix: OnceLock::new() }
    }

    /// `x_{∧t}`: equal to `x` before `t` and to `x(t)` afterwards. A jump at
    /// `t` is kept.
    pub fn stop_at(&self, t: f64) -> Result<CadlagPath, PathError> {
        self.grid.check(t)?;
        let v: Vector = self.at(t).into();
        Ok(self.frozen(t, &v, true))
    }

    /// `x_{∧t-}`: frozen at the left limit, so a jump at `t` is removed.
    pub fn stop_left(&self, t: f64) -> Result<CadlagPath, PathError> {
        self.grid.check(t)?;
        let v: Vector = self.left_limit(t).into();
        Ok(self.frozen(t, &v, false))
    }

    /// `x^h_{∧t}`: the stopped path with `h` added from `t` onward.
    pub fn perturb(&self, t: f64, h: &[f64]) -> Result<CadlagPath, PathError> {
        self.grid.check(t)?;
        if h.len() != self.dim {
            return Err(PathError::DimensionMismatch { expected: self.dim, found: h.len() });
        }
        if h.iter().all(|&v| v == 0.0) {
            return self.stop_at(t);
        }
        let v: Vector = self.at(t).iter().zip(h).map(|(a, b)| a + b).collect();
        Ok(self.frozen(t, &v, true))
    }

    /// Time reversal `x̂(t) = x((T - t)-)`. Knot `k` of the result sits at
    /// `T - t_{K-k}`; a jump of `x` at `t_j` becomes a jump of `-Δx(t_j)` at
    /// `T - t_j`. A jump at `T` has no image.
    pub fn reverse(&self) -> CadlagPath {
        let d = self.dim;
        let n = self.grid.len();
        let big_t = self.horizon();
        let mut knots: Vec<f64> = (0..n).map(|k| big_t - self.grid.knot(n - 1 - k)).collect();
        knots[0] = 0.0;
        knots[n - 1] = big_t;
        let mut values = Vec::with_capacity(n * d);
        let mut left = Vec::with_capacity(n * d);
        let mut jump = Vec::with_capacity(n);
        for k in 0..n {
            let j = n - 1 - k;
            if k == 0 {
                values.extend_from_slice(self.left(j));
                left.extend_from_slice(self.left(j));
                jump.push(false);
            } else if k == n - 1 {
                values.extend_from_slice(self.value(0));
                left.extend_from_slice(self.value(0));
                jump.push(false);
            } else {
                values.extend_from_slice(self.left(j));
                left.extend_from_slice(self.value(j));
                jump.push(self.jump[j]);
            }
        }
        let grid = TimeGrid::new(knots).expect("reversed grid");
        CadlagPath { grid, dim: d, values, left, jump, prefix: OnceLock::new() }
    }

    /// Bitwise equality of all stored numbers and flags.
    pub fn bit_eq(&self, other: &Self) -> bool {
        let bits = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.dim == other.dim
            && bits(self.grid.knots(), other.grid.knots())
            && bits(&self.values, &other.values)
            && bits(&self.left, &other.left)
            && self.jump == other.jump
    }
}

/// Replaces coordinate `j` (0-based) of `v` by `y`.
pub fn coord_replace(v: &[f64], j: usize, y: f64) -> Result<Vector, PathError> {
    if j >= v.len() {
        return Err(PathError::IndexOutOfRange { index: j, dim: v.len() });
    }
    let mut out: Vector = v.into();
    out[j] = y;
    Ok(out)
}

/// `d*((t, x), (s, y)) = |t - s| + sup_u |x_{∧t}(u) - y_{∧s}(u)|_∞`.
///
/// Both stopped paths are step functions, so the supremum is attained on the
/// union of their knots and the two stopping times.
pub fn d_star(t: f64, x: &CadlagPath, s: f64, y: &CadlagPath) -> Result<f64, PathError> {
    if x.dim() != y.dim() {
        return Err(PathError::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    if x.horizon() != y.horizon() {
        return Err(PathError::HorizonMismatch(x.horizon(), y.horizon()));
    }
    x.grid.check(t)?;
    y.grid.check(s)?;
    let xv = x.stopped_view(t);
    let yv = y.stopped_view(s);
    let mut pts: Vec<f64> = x.grid.knots().iter().chain(y.grid.knots()).copied().collect();
    pts.push(t);
    pts.push(s);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut sup = 0.0f64;
    for &u in &pts {
        for i in 0..x.dim() {
            sup = sup.max((xv.coord(u, i) - yv.coord(u, i)).abs());
        }
    }
    Ok((t - s).abs() + sup)
}
