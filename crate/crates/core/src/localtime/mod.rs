//! Integrals against Brownian local time `dL^x_s(B^j)`: the forward plus
//! time-reversed representation, its displaced variant, the weak-derivative
//! identity, a Tanaka surface estimator and the `‖·‖_L` norm.

mod surface;

pub use surface::{local_time_surface, simple_integral, LocalTimeSurface, SimpleFunctional};

use crate::functional::fd_scale;
use crate::paths::{CadlagPath, PathView, Vector};
use crate::quadrature::UnitRule;
use crate::stats::{summarize, tree_sum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LocalTimeError {
    #[error("paths are not on a common grid")]
    GridMismatch,
    #[error("time {0} is not a grid knot")]
    NotAKnot(f64),
    #[error("coordinate {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("empty interval: start {s} after end {t}")]
    Interval { s: f64, t: f64 },
    #[error("need at least {needed} paths, got {found}")]
    TooFewPaths { needed: usize, found: usize },
    #[error("space grid must be strictly increasing with at least two points")]
    BadSpaceGrid,
    #[error("simple functional grid point {0} is not on the surface grid")]
    OffSurfaceGrid(f64),
    #[error("coefficient table has {found} entries, expected {expected}")]
    CoefficientShape { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ForwardBackward,
    SimpleFormula,
    DerivativeIdentity,
}

/// Ensemble estimate of a local-time integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeIntegralEstimate {
    pub method: Method,
    pub value: f64,
    pub std_error: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: Option<u64>,
}

impl LocalTimeIntegralEstimate {
    pub fn from_samples(method: Method, samples: &[f64], k: usize, seed: Option<u64>) -> Self {
        let s = summarize(samples);
        Self { method, value: s.mean, std_error: s.std_error, k, m: samples.len(), seed }
    }

    /// `|a - b| ≤ factor · sqrt(se_a² + se_b²)`.
    pub fn agrees_with(&self, other: &Self, factor: f64) -> bool {
        (self.value - other.value).abs() <= factor * self.std_error.hypot(other.std_error)
    }
}

/// The two halves of the forward/backward representation on one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardBackward {
    pub forward: f64,
    pub backward: f64,
}

impl ForwardBackward {
    pub fn value(&self) -> f64 {
        self.forward + self.backward
    }
}

fn knot_index(path: &CadlagPath, t: f64) -> Result<usize, LocalTimeError> {
    path.grid().index_of(t).ok_or(LocalTimeError::NotAKnot(t))
}

fn check_common(y: &CadlagPath, b: &CadlagPath, j: usize) -> Result<(), LocalTimeError> {
    if y.grid() != b.grid() {
        return Err(LocalTimeError::GridMismatch);
    }
    if j >= b.dim() {
        return Err(LocalTimeError::IndexOutOfRange { index: j, dim: b.dim() });
    }
    Ok(())
}

/// Sum over the cells `(t_k, t_{k+1}] ⊂ [0, t]` of
/// `F_k ΔB^j_k` (forward, left endpoints) and `F_{k+1} (B^j_k - B^j_{k+1})`
/// (backward: left endpoints of the reversed path `B̂(r) = B((T-r)-)`),
/// where `F_k` is the integrand at knot `k`.
fn two_sided(values: &[f64], b: &CadlagPath, j: usize, n: usize) -> ForwardBackward {
    let mut fwd = Vec::with_capacity(n);
    let mut bwd = Vec::with_capacity(n);
    let big_k = b.grid().steps();
    for k in 0..n {
        fwd.push(values[k] * (b.value(k + 1)[j] - b.value(k)[j]));
    }
    // Reversed time: knot r of B̂ is knot K - r of B, and B̂ steps across the
    // original cell (t_{K-r-1}, t_{K-r}] from right to left.
    for r in (big_k - n)..big_k {
        let k = big_k - r;
        bwd.push(values[k] * (b.left(k - 1)[j] - b.left(k)[j]));
    }
    // Accumulate both halves in original time order so that a constant
    // integrand cancels exactly.
    bwd.reverse();
    ForwardBackward { forward: tree_sum(&fwd), backward: tree_sum(&bwd) }
}

/// `∫_0^t ∫ F(s, Y_{∧s-}, B(s)|_{B^j(s)=x}) dL^x_s(B^j)` on one path via
///
/// `∫_0^t F(s, Y_{∧s-}, B(s)) dB^j(s) + ∫_{T-t}^T F(T-s, Y_{∧(T-s)-}, B̂(s)) dB̂^j(s)`.
///
/// `t` must be a knot of the common grid of `Y` and `B`.
pub fn forward_backward_path<F>(
    f: F,
    y: &CadlagPath,
    b: &CadlagPath,
    j: usize,
    t: f64,
) -> Result<ForwardBackward, LocalTimeError>
where
    F: Fn(f64, &PathView<'_>, &[f64]) -> f64,
{
    check_common(y, b, j)?;
    let n = knot_index(b, t)?;
    let values: Vec<f64> = (0..=n)
        .map(|k| {
            let s = b.grid().knot(k);
            f(s, &y.left_stopped_view(s), b.value(k))
        })
        .collect();
    Ok(two_sided(&values, b, j, n))
}

/// Same as [`forward_backward_path`] for integrand values already computed
/// at the knots `0..=n` (`n` the index of `t`).
pub fn forward_backward_from_values(values: &[f64], b: &CadlagPath, j: usize) -> ForwardBackward {
    two_sided(values, b, j, values.len() - 1)
}

/// Ensemble version of [`forward_backward_path`] over `(Y, B)` pairs.
pub fn forward_backward_integral<F>(
    f: F,
    pairs: &[(&CadlagPath, &CadlagPath)],
    j: usize,
    t: f64,
    seed: Option<u64>,
) -> Result<LocalTimeIntegralEstimate, LocalTimeError>
where
    F: Fn(f64, &PathView<'_>, &[f64]) -> f64,
{
    let per: Vec<f64> =
        pairs.iter().map(|(y, b)| forward_backward_path(&f, y, b, j, t).map(|v| v.value())).collect::<Result<_, _>>()?;
    let k = pairs.first().map_or(0, |(_, b)| b.grid().steps());
    Ok(LocalTimeIntegralEstimate::from_samples(Method::ForwardBackward, &per, k, seed))
}

/// `∫_s^t ∫ F(s, Z_{∧s}, N(r), B_s(r)|_{B_s^j(r)=x}) dL^x_r(B^j_s)` with
/// `B_s(r) = B(r) - B(s)`, on one path. `N` enters through left limits in
/// both halves; the backward half runs over `[T-t, T-s]` in reversed time.
pub fn displaced_path<F>(
    f: F,
    z: &CadlagPath,
    n: &CadlagPath,
    b: &CadlagPath,
    s: f64,
    t: f64,
    j: usize,
) -> Result<ForwardBackward, LocalTimeError>
where
    F: Fn(f64, &PathView<'_>, &[f64], &[f64]) -> f64,
{
    if s > t {
        return Err(LocalTimeError::Interval { s, t });
    }
    check_common(n, b, j)?;
    if z.grid() != b.grid() {
        return Err(LocalTimeError::GridMismatch);
    }
    let i0 = knot_index(b, s)?;
    let i1 = knot_index(b, t)?;
    let zs = z.stopped_view(s);
    let b0: Vector = b.value(i0).into();
    let shifted = |k: usize| -> Vector { b.value(k).iter().zip(&b0).map(|(a, c)| a - c).collect() };
    let values: Vec<f64> = (i0..=i1).map(|k| f(s, &zs, n.left(k), &shifted(k))).collect();
    let mut fwd = Vec::with_capacity(i1 - i0);
    let mut bwd = Vec::with_capacity(i1 - i0);
    for k in i0..i1 {
        let d = b.value(k + 1)[j] - b.value(k)[j];
        fwd.push(values[k - i0] * d);
        bwd.push(values[k + 1 - i0] * (b.value(k)[j] - b.value(k + 1)[j]));
    }
    Ok(ForwardBackward { forward: tree_sum(&fwd), backward: tree_sum(&bwd) })
}

/// `-∫_0^t ∂_j F(s, Y_{∧s-}, B(s)) ds` by the trapezoid rule on the knots,
/// with `∂_j F` supplied by the caller (see [`fd_partial`]).
pub fn derivative_identity_path<G>(
    d_f: G,
    y: &CadlagPath,
    b: &CadlagPath,
    j: usize,
    t: f64,
) -> Result<f64, LocalTimeError>
where
    G: Fn(f64, &PathView<'_>, &[f64]) -> f64,
{
    check_common(y, b, j)?;
    let n = knot_index(b, t)?;
    let g: Vec<f64> = (0..=n)
        .map(|k| {
            let s = b.grid().knot(k);
            d_f(s, &y.left_stopped_view(s), b.value(k))
        })
        .collect();
    let cells: Vec<f64> = (0..n).map(|k| 0.5 * (g[k] + g[k + 1]) * (b.grid().knot(k + 1) - b.grid().knot(k))).collect();
    Ok(-tree_sum(&cells))
}

pub fn derivative_identity_integral<G>(
    d_f: G,
    pairs: &[(&CadlagPath, &CadlagPath)],
    j: usize,
    t: f64,
    seed: Option<u64>,
) -> Result<LocalTimeIntegralEstimate, LocalTimeError>
where
    G: Fn(f64, &PathView<'_>, &[f64]) -> f64,
{
    let per: Vec<f64> =
        pairs.iter().map(|(y, b)| derivative_identity_path(&d_f, y, b, j, t)).collect::<Result<_, _>>()?;
    let k = pairs.first().map_or(0, |(_, b)| b.grid().steps());
    Ok(LocalTimeIntegralEstimate::from_samples(Method::DerivativeIdentity, &per, k, seed))
}

/// Richardson-extrapolated central difference of `F` in its last argument's
/// coordinate `j`, step `1e-4 · max(1, |x|_∞)`.
pub fn fd_partial<F>(f: F, j: usize) -> impl Fn(f64, &PathView<'_>, &[f64]) -> f64
where
    F: Fn(f64, &PathView<'_>, &[f64]) -> f64,
{
    move |s, y, x| {
        let h = 1e-4 * fd_scale(x);
        let at = |d: f64| {
            let mut z: Vector = x.into();
            z[j] += d;
            f(s, y, &z)
        };
        let c = |h: f64| (at(h) - at(-h)) / (2.0 * h);
        (4.0 * c(0.5 * h) - c(h)) / 3.0
    }
}

/// Estimate of `‖F‖_L = 2 (E ∫_0^T F² dt)^{1/2} + E ∫_0^T |F| ‖B(t)‖_1 / t dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeNorm {
    pub value: f64,
    /// `2 (E ∫ F² dt)^{1/2}`.
    pub l2_term: f64,
    /// `E ∫ |F| ‖B‖_1 / t dt`.
    pub weighted_term: f64,
    pub weighted_se: f64,
    pub paths: usize,
}

/// Nodes of the `u`-rule on the first cell after substituting `t = u²`.
pub const FIRST_CELL_NODES: usize = 64;

/// Per-path `(∫ F² dt, ∫ |F| ‖B‖_1 / t dt)`.
///
/// On the first cell `(0, t_1]` the Brownian value is interpolated by
/// scaling, `B(t) ≈ (t/t_1)^{1/2} B(t_1)`, and the singular weight is removed
/// by `t = u²`. On later cells `|F| ‖B‖_1` is interpolated linearly in `t`
/// and integrated exactly against `1/t`; `F²` uses the trapezoid rule.
pub fn local_time_norm_path<F>(f: &F, y: &CadlagPath, b: &CadlagPath, rule: &UnitRule) -> Result<(f64, f64), LocalTimeError>
where
    F: Fn(f64, &PathView<'_>, &[f64]) -> f64,
{
    if y.grid() != b.grid() {
        return Err(LocalTimeError::GridMismatch);
    }
    let grid = b.grid();
    let n = grid.steps();
    let l1 = |v: &[f64]| v.iter().map(|a| a.abs()).sum::<f64>();
    let vals: Vec<f64> = (0..=n)
        .map(|k| {
            let s = grid.knot(k);
            f(s, &y.stopped_view(s), b.value(k))
        })
        .collect();
    let h: Vec<f64> = (0..=n).map(|k| vals[k].abs() * l1(b.value(k))).collect();

    let mut sq = Vec::with_capacity(n);
    let mut weighted = Vec::with_capacity(n);
    let t1 = grid.knot(1);
    let r1 = t1.sqrt();
    let b1: Vector = b.value(1).into();
    // ∫_0^{t_1} |F| ‖B‖_1/t dt = (2‖B_1‖_1/√t_1) ∫_0^{√t_1} |F(u², ·, (u/√t_1) B_1)| du.
    let first = rule.integrate(0.0, r1, |u| {
        let s = u * u;
        let bu: Vector = b1.iter().map(|v| v * u / r1).collect();
        f(s, &y.stopped_view(s), &bu).abs()
    });
    weighted.push(2.0 * l1(&b1) / r1 * first);
    for k in 0..n {
        let (a, c) = (grid.knot(k), grid.knot(k + 1));
        sq.push(0.5 * (vals[k] * vals[k] + vals[k + 1] * vals[k + 1]) * (c - a));
        if k > 0 {
            let ln = (c / a).ln();
            let slope = (h[k + 1] - h[k]) / (c - a);
            weighted.push(h[k] * ln + slope * ((c - a) - a * ln));
        }
    }
    Ok((tree_sum(&sq), tree_sum(&weighted)))
}

/// Monte Carlo `‖F‖_L` over an ensemble of `(Y, B)` pairs (`M ≥ 2`).
pub fn local_time_norm<F>(f: F, pairs: &[(&CadlagPath, &CadlagPath)]) -> Result<LocalTimeNorm, LocalTimeError>
where
    F: Fn(f64, &PathView<'_>, &[f64]) -> f64,
{
    if pairs.len() < 2 {
        return Err(LocalTimeError::TooFewPaths { needed: 2, found: pairs.len() });
    }
    let rule = UnitRule::new(FIRST_CELL_NODES);
    let per: Vec<(f64, f64)> =
        pairs.iter().map(|(y, b)| local_time_norm_path(&f, y, b, &rule)).collect::<Result<_, _>>()?;
    Ok(combine_norm(&per))
}

/// Assembles the norm from per-path `(∫F², ∫|F|‖B‖_1/t)` pairs.
pub fn combine_norm(per: &[(f64, f64)]) -> LocalTimeNorm {
    let a: Vec<f64> = per.iter().map(|p| p.0).collect();
    let w: Vec<f64> = per.iter().map(|p| p.1).collect();
    let sa = summarize(&a);
    let sw = summarize(&w);
    let l2_term = 2.0 * sa.mean.max(0.0).sqrt();
    LocalTimeNorm { value: l2_term + sw.mean, l2_term, weighted_term: sw.mean, weighted_se: sw.std_error, paths: per.len() }
}
