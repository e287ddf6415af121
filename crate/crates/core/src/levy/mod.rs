//! Lévy triplets `(μ, Σ, ν)` with finite-activity jump measures, their
//! spectral data, path simulation through the Lévy–Itô decomposition, and
//! the jump-adapted stopping-time partitions.

mod partition;
mod simulate;
pub mod spectral;

pub use partition::{piecewise_approx, stopping_partition, stopping_partition_from, StoppingPartition};
pub use simulate::{path_seed, simulate, JumpClass, JumpRecord, SimGrid, SimulatedLevyPath};
pub use spectral::{SpectralDecomp, SpectralError};

use crate::paths::Vector;
use crate::quadrature::UnitRule;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Jumps with `|y|_2 < SMALL_JUMP_RADIUS` are compensated.
pub const SMALL_JUMP_RADIUS: f64 = 1.0;

/// Total number of product-rule nodes for continuous jump laws.
const PRODUCT_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("drift has dimension {drift} but covariance is {cov}x{cov}")]
    DimensionMismatch { drift: usize, cov: usize },
    #[error("model dimension must be at least 1")]
    EmptyModel,
    #[error("jump component {index}: {message}")]
    BadJump { index: usize, message: String },
    #[error("invalid simulation grid: {0}")]
    BadGrid(String),
    #[error("{0}")]
    Invalid(String),
}

/// Normalised jump-size law of one compound Poisson component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum JumpLaw {
    /// Point mass at `at`.
    Atom { at: Vec<f64> },
    /// Uniform on the closed ball `|y - center|_2 <= radius`.
    UniformBall { center: Vec<f64>, radius: f64 },
    /// `N(mean, std_dev² I)` conditioned on `|y|_2 <= radius`.
    GaussianTruncated { mean: Vec<f64>, std_dev: f64, radius: f64 },
}

impl JumpLaw {
    pub fn dim(&self) -> usize {
        match self {
            JumpLaw::Atom { at } => at.len(),
            JumpLaw::UniformBall { center, .. } => center.len(),
            JumpLaw::GaussianTruncated { mean, .. } => mean.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            JumpLaw::Atom { at } => at.iter().copied().collect(),
            JumpLaw::UniformBall { center, radius } => {
                let d = center.len();
                let z: Vector = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                let u: f64 = rng.random();
                let r = radius * u.powf(1.0 / d as f64);
                center.iter().zip(&z).map(|(c, v)| c + r * v / norm).collect()
            }
            JumpLaw::GaussianTruncated { mean, std_dev, radius } => loop {
                let y: Vector = mean
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + std_dev * z
                    })
                    .collect();
                if norm2(&y) <= *radius {
                    break y;
                }
            },
        }
    }

    /// Nodes (flat, `n × d`) and weights summing to 1 approximating the law.
    /// Atoms are exact; continuous laws use a masked tensor Gauss–Legendre
    /// rule with `max(2, ⌊64^{1/d}⌋)` nodes per axis.
    fn quadrature(&self) -> Result<(Vec<f64>, Vec<f64>), String> {
        match self {
            JumpLaw::Atom { at } => Ok((at.clone(), vec![1.0])),
            JumpLaw::UniformBall { center, radius } => {
                let boxes: Vec<(f64, f64)> = center.iter().map(|c| (c - radius, c + radius)).collect();
                let (c, r) = (center.clone(), *radius);
                product_rule(&boxes, |y| {
                    let dist = y.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    if dist <= r {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
            JumpLaw::GaussianTruncated { mean, std_dev, radius } => {
                let mut boxes = Vec::with_capacity(mean.len());
                for m in mean {
                    let lo = (m - 6.0 * std_dev).max(-radius);
                    let hi = (m + 6.0 * std_dev).min(*radius);
                    if !(hi > lo) {
                        return Err("truncation ball does not meet the bulk of the Gaussian".into());
                    }
                    boxes.push((lo, hi));
                }
                let (mu, s, r) = (mean.clone(), *std_dev, *radius);
                product_rule(&boxes, |y| {
                    if norm2(y) > r {
                        return 0.0;
                    }
                    let q: f64 = y.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-0.5 * q / (s * s)).exp()
                })
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            JumpLaw::Atom { at } if !finite(at) => Err("atom location must be finite".into()),
            JumpLaw::UniformBall { center, radius } if !finite(center) || !(*radius > 0.0) || !radius.is_finite() => {
                Err("uniform_ball needs a finite center and a positive radius".into())
            }
            JumpLaw::GaussianTruncated { mean, std_dev, radius }
                if !finite(mean) || !(*std_dev > 0.0) || !std_dev.is_finite() || !(*radius > 0.0) || !radius.is_finite() =>
            {
                Err("gaussian_truncated needs a finite mean, std_dev > 0 and radius > 0".into())
            }
            _ if self.dim() == 0 => Err("jump law has dimension 0".into()),
            _ => Ok(()),
        }
    }
}

fn product_rule(boxes: &[(f64, f64)], density: impl Fn(&[f64]) -> f64) -> Result<(Vec<f64>, Vec<f64>), String> {
    let d = boxes.len();
    let per_axis = ((PRODUCT_NODES as f64).powf(1.0 / d as f64).floor() as usize).max(2);
    let rule = UnitRule::new(per_axis);
    let total = per_axis.pow(d as u32);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut y = vec![0.0; d];
    for idx in 0..total {
        let mut rest = idx;
        let mut w = 1.0;
        for (a, &(lo, hi)) in boxes.iter().enumerate() {
            let k = rest % per_axis;
            rest /= per_axis;
            y[a] = lo + (hi - lo) * rule.nodes[k];
            w *= (hi - lo) * rule.weights[k];
        }
        let w = w * density(&y);
        if w > 0.0 {
            nodes.extend_from_slice(&y);
            weights.push(w);
        }
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) {
        return Err("no quadrature node carries mass".into());
    }
    for w in &mut weights {
        *w /= sum;
    }
    Ok((nodes, weights))
}

pub(crate) fn norm2(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One compound Poisson component of `ν`: `rate · law`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpComponent {
    pub rate: f64,
    pub law: JumpLaw,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl JumpComponent {
    pub fn new(rate: f64, law: JumpLaw) -> Result<Self, String> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(format!("rate must be positive and finite, got {rate}"));
        }
        law.validate()?;
        let (nodes, weights) = law.quadrature()?;
        Ok(Self { rate, law, nodes, weights })
    }

    pub fn atom(rate: f64, at: Vec<f64>) -> Result<Self, String> {
        Self::new(rate, JumpLaw::Atom { at })
    }

    /// Quadrature nodes of the normalised law.
    pub fn nodes(&self) -> impl Iterator<Item = (&[f64], f64)> {
        let d = self.law.dim();
        self.nodes.chunks(d).zip(self.weights.iter().copied())
    }
}

/// Discrete measure on the small-jump region: nodes `y_q` with
/// `|y_q|_2 < 1` and weights `rate · w_q`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SmallJumpMeasure {
    pub dim: usize,
    pub nodes: Vec<Vector>,
    pub weights: Vec<f64>,
}

impl SmallJumpMeasure {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_{|y|<1} y ν(dy)`.
    pub fn mean(&self) -> Vector {
        let mut c: Vector = smallvec::smallvec![0.0; self.dim];
        for (y, w) in self.nodes.iter().zip(&self.weights) {
            for (ci, yi) in c.iter_mut().zip(y) {
                *ci += w * yi;
            }
        }
        c
    }
}

/// `(μ, Σ, ν)` with the spectral data of `Σ` precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    drift: Vec<f64>,
    sigma: Vec<f64>,
    jumps: Vec<JumpComponent>,
    decomp: SpectralDecomp,
    small: SmallJumpMeasure,
    compensator: Vector,
}

/// Value of `∫_{|y|<1} |(I - Q) y|_2 ν(dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCondition {
    pub finite: bool,
    pub value: f64,
}

impl LevyModel {
    /// `sigma` is row-major `d × d`.
    pub fn new(drift: Vec<f64>, sigma: Vec<f64>, jumps: Vec<JumpComponent>) -> Result<Self, ModelError> {
        let d = drift.len();
        if d == 0 {
            return Err(ModelError::EmptyModel);
        }
        if sigma.len() != d * d {
            let cov = (sigma.len() as f64).sqrt() as usize;
            return Err(ModelError::DimensionMismatch { drift: d, cov });
        }
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Invalid("drift must be finite".into()));
        }
        let decomp = SpectralDecomp::new(&sigma)?;
        for (index, c) in jumps.iter().enumerate() {
            if c.law.dim() != d {
                return Err(ModelError::BadJump {
                    index,
                    message: format!("jump dimension {} does not match model dimension {d}", c.law.dim()),
                });
            }
        }
        let mut small = SmallJumpMeasure { dim: d, ..Default::default() };
        for c in &jumps {
            for (y, w) in c.nodes() {
                if norm2(y) < SMALL_JUMP_RADIUS {
                    small.nodes.push(y.into());
                    small.weights.push(c.rate * w);
                }
            }
        }
        let compensator = small.mean();
        Ok(Self { drift, sigma, jumps, decomp, small, compensator })
    }

    /// Brownian motion with covariance `sigma` and drift `drift`.
    pub fn brownian(drift: Vec<f64>, sigma: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(drift, sigma, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn rank(&self) -> usize {
        self.decomp.rank
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn jumps(&self) -> &[JumpComponent] {
        &self.jumps
    }

    pub fn has_jumps(&self) -> bool {
        !self.jumps.is_empty()
    }

    pub fn decomp(&self) -> &SpectralDecomp {
        &self.decomp
    }

    /// The discrete small-jump measure shared by the compensator, the
    /// verifiers and the operators.
    pub fn small_jumps(&self) -> &SmallJumpMeasure {
        &self.small
    }

    /// `c = ∫_{|y|<1} y ν(dy)`.
    pub fn compensator(&self) -> &[f64] {
        &self.compensator
    }

    pub fn total_rate(&self) -> f64 {
        self.jumps.iter().map(|c| c.rate).sum()
    }
}

/// `∫_{|y|<1} |(I - Q) y|_2 ν(dy)` on the model's jump quadrature.
pub fn check_drift_condition(model: &LevyModel, decomp: &SpectralDecomp) -> DriftCondition {
    let d = model.dim();
    let mut out: Vector = smallvec::smallvec![0.0; d];
    let small = model.small_jumps();
    let mut value = 0.0;
    for (y, w) in small.nodes.iter().zip(&small.weights) {
        decomp.apply_residual(y, &mut out);
        value += w * norm2(&out);
    }
    DriftCondition { finite: value.is_finite(), value }
}
