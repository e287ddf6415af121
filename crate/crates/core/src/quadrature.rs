//! Gauss–Legendre rules on `[0, 1]` and a simple adaptive integrator.

use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;

/// Nodes and weights of an `n`-point Gauss–Legendre rule mapped to `[0, 1]`,
/// sorted by node.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    pub fn new(n: usize) -> Self {
        let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
        let rule = GaussLegendre::new(n);
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .into_iter()
            .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over `[a, b]` (signed if `b < a`).
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(a + h * x);
        }
        acc * h
    }
}

/// Failure of [`adaptive`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error("integrand is not finite at {0}")]
    NonFinite(f64),
    #[error("adaptive quadrature did not reach tolerance {tol:e} (estimate {estimate:e})")]
    NoConvergence { tol: f64, estimate: f64 },
}

/// Adaptive Gauss–Legendre quadrature comparing a 16-point and a 32-point
/// rule on every subinterval and bisecting until they agree.
pub struct Adaptive {
    coarse: UnitRule,
    fine: UnitRule,
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for Adaptive {
    fn default() -> Self {
        Self { coarse: UnitRule::new(16), fine: UnitRule::new(32), tol: 1e-13, max_depth: 30 }
    }
}

impl Adaptive {
    pub fn integrate(&self, a: f64, b: f64, f: &mut dyn FnMut(f64) -> f64) -> Result<f64, QuadError> {
        if a == b {
            return Ok(0.0);
        }
        let mut worst = 0.0f64;
        let v = self.segment(a, b, f, self.tol, 0, &mut worst)?;
        Ok(v)
    }

    fn segment(
        &self,
        a: f64,
        b: f64,
        f: &mut dyn FnMut(f64) -> f64,
        tol: f64,
        depth: u32,
        worst: &mut f64,
    ) -> Result<f64, QuadError> {
        let mut eval = |rule: &UnitRule| -> Result<f64, QuadError> {
            let h = b - a;
            let mut acc = 0.0;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let s = a + h * x;
                let v = f(s);
                if !v.is_finite() {
                    return Err(QuadError::NonFinite(s));
                }
                acc += w * v;
            }
            Ok(acc * h)
        };
        let c = eval(&self.coarse)?;
        let g = eval(&self.fine)?;
        let err = (g - c).abs();
        if err <= tol * g.abs().max(1.0) {
            return Ok(g);
        }
        if depth >= self.max_depth {
            *worst = worst.max(err);
            return Err(QuadError::NoConvergence { tol, estimate: err });
        }
        let m = 0.5 * (a + b);
        let left = self.segment(a, m, f, tol, depth + 1, worst)?;
        let right = self.segment(m, b, f, tol, depth + 1, worst)?;
        Ok(left + right)
    }
}
