use super::{norm2, LevyModel, ModelError, SMALL_JUMP_RADIUS};
use crate::paths::{CadlagPath, TimeGrid, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

/// Uniform base grid; jump times are added as extra knots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpClass {
    /// `|y|_2 < 1`, compensated.
    Small,
    /// `|y|_2 >= 1`.
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    /// Knot index of `time` in the simulated grid.
    pub knot: usize,
    pub y: Vec<f64>,
    pub class: JumpClass,
}

impl JumpRecord {
    pub fn new(time: f64, knot: usize, y: Vec<f64>) -> Self {
        let class = if norm2(&y) < SMALL_JUMP_RADIUS { JumpClass::Small } else { JumpClass::Large };
        Self { time, knot, y, class }
    }
}

/// One simulated path together with its Lévy–Itô components, all on the
/// same per-path grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLevyPath {
    /// `X = μt + Σ^{1/2} B + N`.
    pub x: CadlagPath,
    /// `m`-dimensional standard Brownian motion (`m = rank Σ`).
    pub brownian: CadlagPath,
    /// `N(t) = Σ_{s <= t} ΔX(s) - t ∫_{|y|<1} y ν(dy)`.
    pub jump_part: CadlagPath,
    /// `X^d = μt + N`, the path without its Gaussian part.
    pub nongaussian: CadlagPath,
    pub jumps: Vec<JumpRecord>,
    pub seed: u64,
}

impl SimulatedLevyPath {
    pub fn grid(&self) -> &TimeGrid {
        self.x.grid()
    }
}

/// Per-path seed in an ensemble: `master ⊕ i`.
pub fn path_seed(master: u64, i: usize) -> u64 {
    master ^ i as u64
}

/// Simulates one path. Deterministic in `(model, grid, seed)`.
///
/// Jump counts are Poisson(`λT`) per component with times uniform on
/// `(0, T]`; Brownian increments are drawn on the refined grid after all
/// jumps, so the jump record does not depend on the number of steps.
pub fn simulate(model: &LevyModel, grid: SimGrid, seed: u64) -> Result<SimulatedLevyPath, ModelError> {
    let big_t = grid.horizon;
    if grid.steps == 0 {
        return Err(ModelError::BadGrid("steps must be at least 1".into()));
    }
    let base = TimeGrid::uniform(big_t, grid.steps).map_err(|e| ModelError::BadGrid(e.to_string()))?;
    let d = model.dim();
    let m = model.rank();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut raw: Vec<(f64, Vector)> = Vec::new();
    for c in model.jumps() {
        let lam = c.rate * big_t;
        let n = Poisson::new(lam).map_err(|e| ModelError::Invalid(e.to_string()))?.sample(&mut rng) as u64;
        for _ in 0..n {
            let u: f64 = rng.random();
            let t = big_t * (1.0 - u);
            raw.push((t, c.law.sample(&mut rng)));
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Merge jump times into the uniform knots; coinciding times share a knot.
    let mut knots: Vec<f64> = Vec::with_capacity(base.len() + raw.len());
    let mut knot_jump: Vec<Option<Vector>> = Vec::with_capacity(base.len() + raw.len());
    let mut jumps = Vec::with_capacity(raw.len());
    let mut r = 0;
    for &t in base.knots() {
        while r < raw.len() && raw[r].0 <= t {
            let (tj, ref y) = raw[r];
            if knots.last() == Some(&tj) {
                let slot = knot_jump.last_mut().unwrap().get_or_insert_with(|| smallvec::smallvec![0.0; d]);
                for (a, b) in slot.iter_mut().zip(y) {
                    *a += b;
                }
            } else {
                knots.push(tj);
                knot_jump.push(Some(y.clone()));
            }
            r += 1;
        }
        if knots.last() != Some(&t) {
            knots.push(t);
            knot_jump.push(None);
        }
    }
    for (k, j) in knot_jump.iter().enumerate() {
        if let Some(y) = j {
            jumps.push(JumpRecord::new(knots[k], k, y.to_vec()));
        }
    }
    let grid = TimeGrid::new(knots).map_err(|e| ModelError::BadGrid(e.to_string()))?;
    let n = grid.len();

    let mut b = vec![0.0; n * m];
    for k in 1..n {
        let sd = (grid.knot(k) - grid.knot(k - 1)).sqrt();
        for i in 0..m {
            let z: f64 = StandardNormal.sample(&mut rng);
            b[k * m + i] = b[(k - 1) * m + i] + sd * z;
        }
    }

    let mu = model.drift();
    let c = model.compensator();
    let decomp = model.decomp();
    let mut x = vec![0.0; n * d];
    let mut x_left = vec![0.0; n * d];
    let mut nn = vec![0.0; n * d];
    let mut nn_left = vec![0.0; n * d];
    let mut xd = vec![0.0; n * d];
    let mut xd_left = vec![0.0; n * d];
    let mut flags = vec![false; n];
    let mut sum: Vector = smallvec::smallvec![0.0; d];
    let mut sb: Vector = smallvec::smallvec![0.0; d];
    for k in 0..n {
        let t = grid.knot(k);
        let prev = sum.clone();
        if let Some(y) = &knot_jump[k] {
            for (s, v) in sum.iter_mut().zip(y) {
                *s += v;
            }
            flags[k] = k > 0;
        }
        decomp.apply_sigma_half(&b[k * m..(k + 1) * m], &mut sb);
        for i in 0..d {
            let at = k * d + i;
            let drift = mu[i] * t;
            let comp = t * c[i];
            nn[at] = sum[i] - comp;
            nn_left[at] = prev[i] - comp;
            xd[at] = drift + nn[at];
            xd_left[at] = drift + nn_left[at];
            x[at] = drift + sb[i] + nn[at];
            x_left[at] = drift + sb[i] + nn_left[at];
        }
        if !flags[k] {
            // Continuity knot (or a jump at 0, which is absorbed into X(0)).
            nn_left[k * d..(k + 1) * d].copy_from_slice(&nn[k * d..(k + 1) * d]);
            xd_left[k * d..(k + 1) * d].copy_from_slice(&xd[k * d..(k + 1) * d]);
            x_left[k * d..(k + 1) * d].copy_from_slice(&x[k * d..(k + 1) * d]);
        }
    }
    let path = |v: Vec<f64>, l: Vec<f64>| {
        CadlagPath::from_parts(grid.clone(), d, v, l, flags.clone()).map_err(|e| ModelError::Invalid(e.to_string()))
    };
    Ok(SimulatedLevyPath {
        x: path(x, x_left)?,
        brownian: CadlagPath::continuous(grid.clone(), m, b).map_err(|e| ModelError::Invalid(e.to_string()))?,
        jump_part: path(nn, nn_left)?,
        nongaussian: path(xd, xd_left)?,
        jumps,
        seed,
    })
}
