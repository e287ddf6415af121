//! Smooth maps `ℝ^d → ℝ` with optional analytic derivatives.

use crate::paths::Vector;
use std::fmt;
use std::sync::Arc;

pub type FieldFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type FieldVecFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A scalar field with declared differentiability order (0, 1 or 2).
///
/// Missing derivatives are approximated by Richardson-extrapolated central
/// differences: first derivatives with step `1e-4 · max(1, |x|_∞)`, second
/// derivatives with step `1e-3 · max(1, |x|_∞)`.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    dim: usize,
    order: u8,
    value: Arc<FieldFn>,
    gradient: Option<Arc<FieldVecFn>>,
    hessian: Option<Arc<FieldVecFn>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("order", &self.order)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

pub(crate) fn fd_scale(x: &[f64]) -> f64 {
    x.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

impl ScalarField {
    pub fn new(name: impl Into<String>, dim: usize, order: u8, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), dim, order: order.min(2), value: Arc::new(f), gradient: None, hessian: None }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    /// Row-major `d × d` Hessian.
    pub fn with_hessian(mut self, h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn shifted(&self, x: &[f64], i: usize, h: f64) -> f64 {
        let mut y: Vector = x.into();
        y[i] += h;
        (self.value)(&y)
    }

    pub fn partial(&self, i: usize, x: &[f64]) -> f64 {
        if let Some(g) = &self.gradient {
            let mut out: Vector = smallvec::smallvec![0.0; self.dim];
            g(x, &mut out);
            return out[i];
        }
        let h = 1e-4 * fd_scale(x);
        let c = |h: f64| (self.shifted(x, i, h) - self.shifted(x, i, -h)) / (2.0 * h);
        (4.0 * c(0.5 * h) - c(h)) / 3.0
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            g(x, out);
            return;
        }
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.partial(i, x);
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vector {
        let mut out: Vector = smallvec::smallvec![0.0; self.dim];
        self.gradient_into(x, &mut out);
        out
    }

    /// `∂²f/∂x_i²`, only for fields declared twice differentiable.
    pub fn second_partial(&self, i: usize, x: &[f64]) -> Option<f64> {
        if self.order < 2 {
            return None;
        }
        if let Some(h) = &self.hessian {
            let mut out = vec![0.0; self.dim * self.dim];
            h(x, &mut out);
            return Some(out[i * self.dim + i]);
        }
        let f0 = (self.value)(x);
        let step = 1e-3 * fd_scale(x);
        let d2 = |h: f64| (self.shifted(x, i, h) - 2.0 * f0 + self.shifted(x, i, -h)) / (h * h);
        Some((4.0 * d2(0.5 * step) - d2(step)) / 3.0)
    }

    /// Row-major Hessian, only for fields declared twice differentiable.
    pub fn hessian(&self, x: &[f64]) -> Option<Vec<f64>> {
        if self.order < 2 {
            return None;
        }
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        if let Some(h) = &self.hessian {
            h(x, &mut out);
            return Some(out);
        }
        let step = 1e-3 * fd_scale(x);
        let at = |i: usize, a: f64, j: usize, b: f64| {
            let mut y: Vector = x.into();
            y[i] += a;
            y[j] += b;
            (self.value)(&y)
        };
        let cross = |i: usize, j: usize, h: f64| {
            (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h)
        };
        for i in 0..d {
            for j in i..d {
                let v = (4.0 * cross(i, j, 0.5 * step) - cross(i, j, step)) / 3.0;
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
        Some(out)
    }
}
