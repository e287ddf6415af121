//! Non-anticipative path functionals `F(t, x_{∧t})` and their Dupire
//! derivatives.
//!
//! Functionals receive a [`PathView`]; a well-behaved functional only reads
//! the view on `[0, t]`. Derivatives use analytic overrides when a handle
//! provides them and finite differences otherwise:
//!
//! * horizontal: forward differences `(F(t+h, x_{∧t}) - F(t, x_{∧t}))/h`,
//!   Richardson-extrapolated over `h, h/2`;
//! * vertical: central differences of `F(t, x^{±h e_i}_{∧t})`, extrapolated
//!   as `(4C(h/2) - C(h))/3`;
//! * Hessian: nested central differences, symmetrised.

pub mod catalog;
mod field;

pub use field::{FieldFn, FieldVecFn, ScalarField};
pub(crate) use field::fd_scale;

use crate::paths::{CadlagPath, PathView, TimeGrid, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type Evaluator = dyn Fn(f64, &PathView<'_>) -> f64 + Send + Sync;
pub type VectorEvaluator = dyn Fn(f64, &PathView<'_>, &mut [f64]) + Send + Sync;

/// Regularity class `C^{i,j}`: `i` time derivatives, `j` space derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regularity {
    C00,
    C01,
    C11,
    C12,
}

impl Regularity {
    pub fn space_order(self) -> u8 {
        match self {
            Regularity::C00 => 0,
            Regularity::C01 | Regularity::C11 => 1,
            Regularity::C12 => 2,
        }
    }

    pub fn time_order(self) -> u8 {
        match self {
            Regularity::C00 | Regularity::C01 => 0,
            Regularity::C11 | Regularity::C12 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FunctionalError {
    #[error("horizontal derivative needs t < T (t = {t}, T = {horizon})")]
    AtHorizon { t: f64, horizon: f64 },
    #[error("time {t} outside [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },
    #[error("coordinate index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("dimension mismatch: functional has {expected}, path has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("step must be positive, got {0}")]
    BadStep(f64),
}

/// An immutable, shareable path functional.
#[derive(Clone)]
pub struct FunctionalHandle {
    name: String,
    dim: usize,
    class: Regularity,
    eval: Arc<Evaluator>,
    horizontal: Option<Arc<Evaluator>>,
    gradient: Option<Arc<VectorEvaluator>>,
    hessian: Option<Arc<VectorEvaluator>>,
}

impl fmt::Debug for FunctionalHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionalHandle")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("class", &self.class)
            .field("analytic_horizontal", &self.horizontal.is_some())
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Analytic,
    Forward1st,
    Central2nd,
    Richardson,
}

/// Result of a derivative computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate<V = f64> {
    pub value: V,
    pub step_used: f64,
    pub order: Scheme,
    /// Difference between the estimates at the two step sizes.
    pub error_indicator: f64,
    /// Forward and backward one-sided differences (vertical derivatives).
    pub one_sided: Option<(f64, f64)>,
    /// Set when the one-sided differences disagree at a rate that does not
    /// shrink with the step, i.e. the functional has a kink.
    pub kink: bool,
}

/// Hessian estimate; `value` is symmetrised, `raw` is the nested-difference
/// matrix before symmetrisation.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianEstimate {
    pub value: Vec<f64>,
    pub raw: Vec<f64>,
    pub step_used: f64,
    pub order: Scheme,
    pub error_indicator: f64,
}

/// Outcome of [`check_nonanticipative`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonAnticipativeReport {
    pub max_discrepancy: f64,
    pub worst_probe: Option<usize>,
    pub tol: f64,
    pub pass: bool,
}

pub const DEFAULT_TOL_NA: f64 = 1e-12;

/// Default vertical step `1e-4 · max(1, |x(t)|_∞)`.
pub fn default_space_step(view: &PathView<'_>, t: f64) -> f64 {
    1e-4 * field::fd_scale(&view.at(t))
}

/// Default horizontal step `1e-4 · max(1, T)`.
pub fn default_time_step(horizon: f64) -> f64 {
    1e-4 * horizon.max(1.0)
}

impl FunctionalHandle {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        class: Regularity,
        f: impl Fn(f64, &PathView<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), dim, class, eval: Arc::new(f), horizontal: None, gradient: None, hessian: None }
    }

    pub fn with_horizontal(mut self, f: impl Fn(f64, &PathView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        self.horizontal = Some(Arc::new(f));
        self
    }

    pub fn with_gradient(mut self, f: impl Fn(f64, &PathView<'_>, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(f));
        self
    }

    /// Row-major `d × d` Hessian.
    pub fn with_hessian(mut self, f: impl Fn(f64, &PathView<'_>, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(f));
        self
    }

    /// Same evaluator with every analytic derivative dropped, so that all
    /// derivatives fall back to finite differences.
    pub fn without_derivatives(&self) -> Self {
        Self {
            name: self.name.clone(),
            dim: self.dim,
            class: self.class,
            eval: self.eval.clone(),
            horizontal: None,
            gradient: None,
            hessian: None,
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class(&self) -> Regularity {
        self.class
    }

    pub fn has_analytic_horizontal(&self) -> bool {
        self.horizontal.is_some()
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    /// `F(t, x)` for a view.
    pub fn eval(&self, t: f64, x: &PathView<'_>) -> f64 {
        (self.eval)(t, x)
    }

    /// `F(t, x)` for a whole path.
    pub fn eval_path(&self, t: f64, x: &CadlagPath) -> f64 {
        (self.eval)(t, &x.view())
    }

    /// Sum of two functionals on the same dimension. Analytic derivatives
    /// are kept only when both sides provide them.
    pub fn plus(&self, other: &FunctionalHandle) -> FunctionalHandle {
        let (a, b) = (self.clone(), other.clone());
        let class = self.class.min(other.class);
        let name = format!("{}+{}", self.name, other.name);
        let (ea, eb) = (a.eval.clone(), b.eval.clone());
        let mut out = FunctionalHandle::new(name, self.dim, class, move |t, x| ea(t, x) + eb(t, x));
        if let (Some(ha), Some(hb)) = (a.horizontal.clone(), b.horizontal.clone()) {
            out = out.with_horizontal(move |t, x| ha(t, x) + hb(t, x));
        }
        let d = self.dim;
        if let (Some(ga), Some(gb)) = (a.gradient.clone(), b.gradient.clone()) {
            out = out.with_gradient(move |t, x, o| {
                let mut tmp: Vector = smallvec::smallvec![0.0; d];
                ga(t, x, o);
                gb(t, x, &mut tmp);
                for (o, v) in o.iter_mut().zip(&tmp) {
                    *o += v;
                }
            });
        }
        if let (Some(ha), Some(hb)) = (a.hessian.clone(), b.hessian.clone()) {
            out = out.with_hessian(move |t, x, o| {
                let mut tmp = vec![0.0; d * d];
                ha(t, x, o);
                hb(t, x, &mut tmp);
                for (o, v) in o.iter_mut().zip(&tmp) {
                    *o += v;
                }
            });
        }
        out
    }

    /// `DF(t, x)`: analytic when available, otherwise forward differences
    /// with Richardson extrapolation. The argument is stopped at `t` first.
    pub fn horizontal_derivative(
        &self,
        t: f64,
        x: &PathView<'_>,
        h0: Option<f64>,
    ) -> Result<DerivativeEstimate, FunctionalError> {
        let horizon = x.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(FunctionalError::Domain { t, horizon });
        }
        if t >= horizon {
            return Err(FunctionalError::AtHorizon { t, horizon });
        }
        let h0 = h0.unwrap_or_else(|| default_time_step(horizon));
        if !(h0 > 0.0) {
            return Err(FunctionalError::BadStep(h0));
        }
        let xs = x.stopped(t);
        if let Some(df) = &self.horizontal {
            return Ok(DerivativeEstimate {
                value: df(t, &xs),
                step_used: h0,
                order: Scheme::Analytic,
                error_indicator: 0.0,
                one_sided: None,
                kink: false,
            });
        }
        let h = h0.min(horizon - t);
        let f0 = (self.eval)(t, &xs);
        let d = |h: f64| ((self.eval)(t + h, &xs) - f0) / h;
        let (d1, d2) = (d(h), d(0.5 * h));
        Ok(DerivativeEstimate {
            value: 2.0 * d2 - d1,
            step_used: h,
            order: Scheme::Richardson,
            error_indicator: (d2 - d1).abs(),
            one_sided: None,
            kink: false,
        })
    }

    /// Fast path used by the verifiers: `DF(t, x_{∧t})` as a number.
    pub fn horizontal_value(&self, t: f64, x: &PathView<'_>) -> f64 {
        if let Some(df) = &self.horizontal {
            return df(t, &x.stopped(t));
        }
        if t >= x.horizon() {
            return 0.0;
        }
        self.horizontal_derivative(t, x, None).map(|e| e.value).unwrap_or(0.0)
    }

    /// `∂_i F(t, x)` (0-based `i`).
    pub fn space_derivative(
        &self,
        i: usize,
        t: f64,
        x: &PathView<'_>,
        h0: Option<f64>,
    ) -> Result<DerivativeEstimate, FunctionalError> {
        self.check_dim(x)?;
        if i >= self.dim {
            return Err(FunctionalError::IndexOutOfRange { index: i, dim: self.dim });
        }
        let h0 = h0.unwrap_or_else(|| default_space_step(x, t));
        if !(h0 > 0.0) {
            return Err(FunctionalError::BadStep(h0));
        }
        let xs = x.stopped(t);
        if let Some(g) = &self.gradient {
            let mut out: Vector = smallvec::smallvec![0.0; self.dim];
            g(t, &xs, &mut out);
            return Ok(DerivativeEstimate {
                value: out[i],
                step_used: h0,
                order: Scheme::Analytic,
                error_indicator: 0.0,
                one_sided: None,
                kink: false,
            });
        }
        Ok(self.numeric_partial(i, t, &xs, h0))
    }

    fn bumped(&self, t: f64, xs: &PathView<'_>, i: usize, h: f64) -> f64 {
        let mut v: Vector = xs.terminal().into();
        v[i] += h;
        (self.eval)(t, &xs.with_terminal(&v))
    }

    fn numeric_partial(&self, i: usize, t: f64, xs: &PathView<'_>, h: f64) -> DerivativeEstimate {
        let f0 = (self.eval)(t, xs);
        let (p1, m1) = (self.bumped(t, xs, i, h), self.bumped(t, xs, i, -h));
        let (p2, m2) = (self.bumped(t, xs, i, 0.5 * h), self.bumped(t, xs, i, -0.5 * h));
        let c1 = (p1 - m1) / (2.0 * h);
        let c2 = (p2 - m2) / h;
        let (fwd1, bwd1) = ((p1 - f0) / h, (f0 - m1) / h);
        let (fwd2, bwd2) = ((p2 - f0) / (0.5 * h), (f0 - m2) / (0.5 * h));
        let (gap1, gap2) = ((fwd1 - bwd1).abs(), (fwd2 - bwd2).abs());
        let floor = 1e-7 * fwd2.abs().max(bwd2.abs()).max(1.0);
        let kink = gap2 > floor && gap2 > 0.75 * gap1;
        DerivativeEstimate {
            value: (4.0 * c2 - c1) / 3.0,
            step_used: h,
            order: Scheme::Richardson,
            error_indicator: (c2 - c1).abs(),
            one_sided: Some((fwd2, bwd2)),
            kink,
        }
    }

    /// `∇F(t, x)`.
    pub fn gradient(
        &self,
        t: f64,
        x: &PathView<'_>,
        h0: Option<f64>,
    ) -> Result<DerivativeEstimate<Vec<f64>>, FunctionalError> {
        self.check_dim(x)?;
        let h0 = h0.unwrap_or_else(|| default_space_step(x, t));
        if !(h0 > 0.0) {
            return Err(FunctionalError::BadStep(h0));
        }
        let xs = x.stopped(t);
        if let Some(g) = &self.gradient {
            let mut out = vec![0.0; self.dim];
            g(t, &xs, &mut out);
            return Ok(DerivativeEstimate {
                value: out,
                step_used: h0,
                order: Scheme::Analytic,
                error_indicator: 0.0,
                one_sided: None,
                kink: false,
            });
        }
        let parts: Vec<DerivativeEstimate> = (0..self.dim).map(|i| self.numeric_partial(i, t, &xs, h0)).collect();
        Ok(DerivativeEstimate {
            value: parts.iter().map(|p| p.value).collect(),
            step_used: h0,
            order: Scheme::Richardson,
            error_indicator: parts.iter().fold(0.0, |m, p| m.max(p.error_indicator)),
            one_sided: None,
            kink: parts.iter().any(|p| p.kink),
        })
    }

    /// Fast path: writes `∇F(t, x_{∧t})` into `out`. `x` must already be
    /// stopped at `t` (the verifiers always pass stopped views).
    pub fn gradient_into(&self, t: f64, xs: &PathView<'_>, out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            g(t, xs, out);
            return;
        }
        let h = 1e-4 * field::fd_scale(xs.terminal());
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let c = |h: f64| (self.bumped(t, xs, i, h) - self.bumped(t, xs, i, -h)) / (2.0 * h);
            *o = (4.0 * c(0.5 * h) - c(h)) / 3.0;
        }
    }

    /// `∇²F(t, x)`, row-major. Numeric Hessians use the step
    /// `1e-3 · max(1, |x(t)|_∞)` unless `h0` is given.
    pub fn hessian(&self, t: f64, x: &PathView<'_>, h0: Option<f64>) -> Result<HessianEstimate, FunctionalError> {
        self.check_dim(x)?;
        let d = self.dim;
        let xs = x.stopped(t);
        let h0 = h0.unwrap_or_else(|| 1e-3 * field::fd_scale(xs.terminal()));
        if !(h0 > 0.0) {
            return Err(FunctionalError::BadStep(h0));
        }
        if let Some(hf) = &self.hessian {
            let mut raw = vec![0.0; d * d];
            hf(t, &xs, &mut raw);
            let value = symmetrize(&raw, d);
            return Ok(HessianEstimate { value, raw, step_used: h0, order: Scheme::Analytic, error_indicator: 0.0 });
        }
        let at = |i: usize, a: f64, j: usize, b: f64| {
            let mut v: Vector = xs.terminal().into();
            v[i] += a;
            v[j] += b;
            (self.eval)(t, &xs.with_terminal(&v))
        };
        let cross = |i: usize, j: usize, h: f64| {
            (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h)
        };
        let mut raw = vec![0.0; d * d];
        let mut err = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let (c1, c2) = (cross(i, j, h0), cross(i, j, 0.5 * h0));
                raw[i * d + j] = (4.0 * c2 - c1) / 3.0;
                err = err.max((c2 - c1).abs());
            }
        }
        let value = symmetrize(&raw, d);
        Ok(HessianEstimate { value, raw, step_used: h0, order: Scheme::Richardson, error_indicator: err })
    }

    /// Fast path: `∇²F(t, x_{∧t})` into `out` (row-major); `xs` stopped at `t`.
    pub fn hessian_into(&self, t: f64, xs: &PathView<'_>, out: &mut [f64]) {
        if let Some(hf) = &self.hessian {
            let d = self.dim;
            hf(t, xs, out);
            let s = symmetrize(out, d);
            out.copy_from_slice(&s);
            return;
        }
        let est = self.hessian(t, xs, None).expect("dimension checked by caller");
        out.copy_from_slice(&est.value);
    }

    fn check_dim(&self, x: &PathView<'_>) -> Result<(), FunctionalError> {
        if x.dim() != self.dim {
            Err(FunctionalError::DimensionMismatch { expected: self.dim, found: x.dim() })
        } else {
            Ok(())
        }
    }
}

fn symmetrize(m: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = 0.5 * (m[i * d + j] + m[j * d + i]);
        }
    }
    out
}

/// Largest `|F(t, x) - F(t, x_{∧t})|` over the probes.
pub fn check_nonanticipative(
    f: &FunctionalHandle,
    probes: &[(f64, CadlagPath)],
    tol: f64,
) -> NonAnticipativeReport {
    let mut max = 0.0f64;
    let mut worst = None;
    for (k, (t, x)) in probes.iter().enumerate() {
        let full = f.eval(*t, &x.view());
        let stopped = f.eval(*t, &x.stopped_view(*t));
        let gap = (full - stopped).abs();
        if gap > max || (gap.is_nan() && worst.is_none()) {
            max = if gap.is_nan() { f64::INFINITY } else { gap };
            worst = Some(k);
        }
    }
    NonAnticipativeReport { max_discrepancy: max, worst_probe: worst, tol, pass: max <= tol }
}

/// Random probes `(t, x)` whose tails after `t` differ from `x(t)`: a
/// Gaussian random walk on `[0, 1]` with an added offset of at least 1 on
/// the last knot so that `x(T) ≠ x(t)`.
pub fn random_probes(dim: usize, count: usize, steps: usize, seed: u64) -> Vec<(f64, CadlagPath)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = TimeGrid::uniform(1.0, steps.max(2)).expect("probe grid");
    (0..count)
        .map(|_| {
            let n = grid.len();
            let mut values = vec![0.0; n * dim];
            for k in 1..n {
                for i in 0..dim {
                    let step: f64 = rng.random::<f64>() - 0.5;
                    values[k * dim + i] = values[(k - 1) * dim + i] + step;
                }
            }
            let kt = rng.random_range(0..n - 1);
            for i in 0..dim {
                values[(n - 1) * dim + i] = values[kt * dim + i] + 1.0 + rng.random::<f64>();
            }
            let x = CadlagPath::continuous(grid.clone(), dim, values).expect("probe path");
            (grid.knot(kt), x)
        })
        .collect()
}
