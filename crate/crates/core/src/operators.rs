//! The coordinate antiderivative `𝓘_i`, the integro-differential operator
//! `𝓐_i` and the reduced composite `𝓐_i 𝓘_i`.
//!
//! Operators act on maps `ℝ^m → ℝ` where `m = rank Σ`. Jumps `y ∈ ℝ^d` of
//! the small-jump measure enter through `R y ∈ ℝ^m`.

use crate::functional::{fd_scale, FunctionalHandle, ScalarField};
use crate::levy::{LevyModel, SimulatedLevyPath, SmallJumpMeasure, SpectralDecomp};
use crate::paths::{PathView, Vector};
use crate::quadrature::{Adaptive, QuadError, UnitRule};
use serde::Serialize;
use std::io::Write;

/// Default number of Gauss–Legendre nodes for the `u` integral.
pub const DEFAULT_U_NODES: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("coordinate {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("point has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("second derivative required but not available")]
    MissingSecondDerivative,
    #[error("small-jump node {index} lies outside the unit ball")]
    NodeOutsideBall { index: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// A map `ℝ^n → ℝ` with first and (optionally) second partials.
///
/// The provided derivative methods are Richardson-extrapolated central
/// differences with the same steps as [`ScalarField`].
pub trait Field {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;

    fn partial(&self, i: usize, x: &[f64]) -> f64 {
        let h = 1e-4 * fd_scale(x);
        let c = |h: f64| (bump(self, x, i, h) - bump(self, x, i, -h)) / (2.0 * h);
        (4.0 * c(0.5 * h) - c(h)) / 3.0
    }

    fn second_partial(&self, i: usize, x: &[f64]) -> Option<f64> {
        let f0 = self.value(x);
        let step = 1e-3 * fd_scale(x);
        let d2 = |h: f64| (bump(self, x, i, h) - 2.0 * f0 + bump(self, x, i, -h)) / (h * h);
        Some((4.0 * d2(0.5 * step) - d2(step)) / 3.0)
    }
}

fn bump<F: Field + ?Sized>(f: &F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut y: Vector = x.into();
    y[i] += h;
    f.value(&y)
}

impl Field for ScalarField {
    fn dim(&self) -> usize {
        ScalarField::dim(self)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn partial(&self, i: usize, x: &[f64]) -> f64 {
        ScalarField::partial(self, i, x)
    }

    fn second_partial(&self, i: usize, x: &[f64]) -> Option<f64> {
        ScalarField::second_partial(self, i, x)
    }
}

/// Quadrature data shared by all operator evaluations for one model.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    pub decomp: SpectralDecomp,
    /// Small-jump nodes `y_q`, `|y_q|_2 < 1`.
    pub nodes: Vec<Vector>,
    /// `R y_q`.
    pub ry: Vec<Vector>,
    /// `ν`-weights (rate times law weight).
    pub weights: Vec<f64>,
    pub u_rule: UnitRule,
}

impl OperatorContext {
    pub fn new(model: &LevyModel) -> Self {
        Self::from_parts(model.decomp().clone(), model.small_jumps(), DEFAULT_U_NODES)
            .expect("model small-jump nodes lie in the unit ball")
    }

    pub fn with_u_nodes(model: &LevyModel, n_u: usize) -> Self {
        Self::from_parts(model.decomp().clone(), model.small_jumps(), n_u).expect("model small-jump nodes lie in the unit ball")
    }

    pub fn from_parts(decomp: SpectralDecomp, small: &SmallJumpMeasure, n_u: usize) -> Result<Self, OperatorError> {
        let mut ry = Vec::with_capacity(small.len());
        for (q, y) in small.nodes.iter().enumerate() {
            if y.len() != decomp.dim {
                return Err(OperatorError::DimensionMismatch { expected: decomp.dim, found: y.len() });
            }
            if crate::levy::norm2(y) >= 1.0 {
                return Err(OperatorError::NodeOutsideBall { index: q });
            }
            let mut r: Vector = smallvec::smallvec![0.0; decomp.rank];
            decomp.apply_r(y, &mut r);
            ry.push(r);
        }
        Ok(Self {
            decomp,
            nodes: small.nodes.clone(),
            ry,
            weights: small.weights.clone(),
            u_rule: UnitRule::new(n_u),
        })
    }

    /// `m = rank Σ`, the dimension the operators act on.
    pub fn rank(&self) -> usize {
        self.decomp.rank
    }

    /// `Σ_q w_q ∫_0^1 g(u, q) du` by the context rules.
    fn jump_integral(&self, mut g: impl FnMut(f64, usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for (q, w) in self.weights.iter().enumerate() {
            let inner = self.u_rule.integrate(0.0, 1.0, |u| g(u, q));
            acc += w * inner;
        }
        acc
    }
}

fn check<F: Field + ?Sized>(f: &F, i: usize, x: &[f64]) -> Result<(), OperatorError> {
    if x.len() != f.dim() {
        return Err(OperatorError::DimensionMismatch { expected: f.dim(), found: x.len() });
    }
    if i >= f.dim() {
        return Err(OperatorError::IndexOutOfRange { index: i, dim: f.dim() });
    }
    Ok(())
}

fn shifted(x: &[f64], u: f64, ry: &[f64]) -> Vector {
    x.iter().zip(ry).map(|(a, b)| a + u * b).collect()
}

/// `𝓘_i f(x) = ∫_0^{x_i} f(x|_{x_i = y}) dy`, by adaptive Gauss–Legendre.
pub fn op_i<F: Field + ?Sized>(f: &F, i: usize, x: &[f64]) -> Result<f64, OperatorError> {
    check(f, i, x)?;
    let mut z: Vector = x.into();
    let mut g = |y: f64| {
        z[i] = y;
        f.value(&z)
    };
    Ok(Adaptive::default().integrate(0.0, x[i], &mut g)?)
}

/// `𝓐_i f(x) = ½ ∂²_i f(x) + ∫∫ (∂_i f(x + uRy) - ∂_i f(x)) (Ry)_i du ν(dy)`.
pub fn op_a<F: Field + ?Sized>(f: &F, i: usize, x: &[f64], ctx: &OperatorContext) -> Result<f64, OperatorError> {
    check(f, i, x)?;
    let curvature = f.second_partial(i, x).ok_or(OperatorError::MissingSecondDerivative)?;
    let d0 = f.partial(i, x);
    let jump = ctx.jump_integral(|u, q| {
        let ry = &ctx.ry[q];
        (f.partial(i, &shifted(x, u, ry)) - d0) * ry[i]
    });
    Ok(0.5 * curvature + jump)
}

/// `𝓐_i 𝓘_i f(x) = ½ ∂_i f(x) + ∫∫ (f(x + uRy) - f(x)) (Ry)_i du ν(dy)`.
///
/// Needs only the first partial of `f`.
pub fn op_ai<F: Field + ?Sized>(f: &F, i: usize, x: &[f64], ctx: &OperatorContext) -> f64 {
    let f0 = f.value(x);
    let jump = ctx.jump_integral(|u, q| {
        let ry = &ctx.ry[q];
        (f.value(&shifted(x, u, ry)) - f0) * ry[i]
    });
    0.5 * f.partial(i, x) + jump
}

/// `x ↦ 𝓘_i f(x)` as a field; used as an independent oracle for
/// [`op_ai`] through `op_a(&Antiderivative { .. })`.
pub struct Antiderivative<'a, F: Field + ?Sized> {
    pub f: &'a F,
    pub i: usize,
}

impl<F: Field + ?Sized> Field for Antiderivative<'_, F> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        op_i(self.f, self.i, x).unwrap_or(f64::NAN)
    }
}

/// `x̃ ↦ f(Σ^{1/2} x̃ + anchor)` on `ℝ^m`.
pub struct Lifted<'a> {
    pub f: &'a ScalarField,
    pub decomp: &'a SpectralDecomp,
    pub anchor: &'a [f64],
}

fn lift(decomp: &SpectralDecomp, anchor: &[f64], z: &[f64]) -> Vector {
    let mut out: Vector = smallvec::smallvec![0.0; decomp.dim];
    decomp.apply_sigma_half(z, &mut out);
    for (o, a) in out.iter_mut().zip(anchor) {
        *o += a;
    }
    out
}

fn directional(decomp: &SpectralDecomp, j: usize, grad: &[f64]) -> f64 {
    decomp.sigma_half_column(j).iter().zip(grad).map(|(a, b)| a * b).sum()
}

impl Field for Lifted<'_> {
    fn dim(&self) -> usize {
        self.decomp.rank
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.f.eval(&lift(self.decomp, self.anchor, x))
    }

    fn partial(&self, j: usize, x: &[f64]) -> f64 {
        let g = self.f.gradient(&lift(self.decomp, self.anchor, x));
        directional(self.decomp, j, &g)
    }
}

/// `x̃ ↦ F(s, w^{Σ^{1/2} x̃ + anchor - w(s)})` where `w` is a view stopped at
/// `s`: the history is kept and only the terminal value moves.
pub struct FrozenFunctional<'a> {
    pub f: &'a FunctionalHandle,
    pub s: f64,
    pub view: PathView<'a>,
    pub decomp: &'a SpectralDecomp,
    pub anchor: &'a [f64],
}

impl Field for FrozenFunctional<'_> {
    fn dim(&self) -> usize {
        self.decomp.rank
    }

    fn value(&self, x: &[f64]) -> f64 {
        let v = self.view.with_terminal(&lift(self.decomp, self.anchor, x));
        self.f.eval(self.s, &v)
    }

    fn partial(&self, j: usize, x: &[f64]) -> f64 {
        let v = self.view.with_terminal(&lift(self.decomp, self.anchor, x));
        let mut g: Vector = smallvec::smallvec![0.0; self.decomp.dim];
        self.f.gradient_into(self.s, &v, &mut g);
        directional(self.decomp, j, &g)
    }
}

/// `𝓐_j 𝓘_j` applied to `x̃ ↦ F(s, X_{∧s-}^{Σ^{1/2} x̃ - X^c(s-)})`, where
/// `X^c = Σ^{1/2} B` is the Gaussian part, so the terminal value of the
/// frozen path is `Σ^{1/2} x̃ + X^d(s-)`.
pub fn op_ai_functional(
    f: &FunctionalHandle,
    j: usize,
    s: f64,
    path: &SimulatedLevyPath,
    x: &[f64],
    ctx: &OperatorContext,
) -> f64 {
    let anchor: Vector = path.nongaussian.left_limit(s).into();
    let frozen = FrozenFunctional {
        f,
        s,
        view: path.x.left_stopped_view(s),
        decomp: &ctx.decomp,
        anchor: &anchor,
    };
    op_ai(&frozen, j, x, ctx)
}

/// One logged operator evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub x: Vec<f64>,
    pub value: f64,
    pub method: String,
}

/// Writes evaluations as CSV with columns `x_1..x_n,value,method`.
pub fn write_evaluations<W: Write>(out: W, rows: &[Evaluation]) -> csv::Result<()> {
    let n = rows.first().map_or(0, |r| r.x.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    header.push("value".into());
    header.push("method".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.x.iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{:?}", r.value));
        rec.push(r.method.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
