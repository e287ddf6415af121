//! Square root, rank, range projection and left inverse of a covariance.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative eigenvalue cutoff for the rank decision.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("covariance has {0} entries, not a square matrix")]
    NotSquare(usize),
    #[error("covariance not symmetric: |Σ[{i}][{j}] - Σ[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("covariance is indefinite: eigenvalue {0:e}")]
    Indefinite(f64),
    #[error("covariance has non-finite entries")]
    NonFinite,
}

/// `Σ = S Sᵀ` with `S` of size `d × m`, `m = rank Σ`, the orthogonal
/// projection `Q` onto the range of `S`, and `R = (SᵀS)⁻¹Sᵀ`.
///
/// When `m = d`, `Q` is set to the exact identity so that `(I - Q)y`
/// vanishes bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomp {
    pub dim: usize,
    pub rank: usize,
    pub sigma_half: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    s_flat: Vec<f64>,
    q_flat: Vec<f64>,
    r_flat: Vec<f64>,
}

impl SpectralDecomp {
    /// Decomposes a row-major `d × d` covariance matrix.
    pub fn new(sigma: &[f64]) -> Result<Self, SpectralError> {
        let d = (sigma.len() as f64).sqrt().round() as usize;
        if d * d != sigma.len() {
            return Err(SpectralError::NotSquare(sigma.len()));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        let scale = sigma.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in (i + 1)..d {
                let gap = (sigma[i * d + j] - sigma[j * d + i]).abs();
                if gap > 1e-12 * scale {
                    return Err(SpectralError::NotSymmetric { i, j, gap });
                }
            }
        }
        let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (sigma[i * d + j] + sigma[j * d + i]));
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let lmax = order.first().map(|&k| eig.eigenvalues[k]).unwrap_or(0.0);
        let lmin = order.last().map(|&k| eig.eigenvalues[k]).unwrap_or(0.0);
        if lmin < -1e-10 * lmax.max(1.0) {
            return Err(SpectralError::Indefinite(lmin));
        }
        let cutoff = RANK_TOL * lmax;
        let kept: Vec<usize> = order.iter().copied().filter(|&k| lmax > 0.0 && eig.eigenvalues[k] > cutoff).collect();
        let rank = kept.len();
        let mut v = DMatrix::<f64>::zeros(d, rank);
        for (c, &k) in kept.iter().enumerate() {
            let col = eig.eigenvectors.column(k);
            // Sign convention: the entry of largest magnitude is positive.
            let mut best = 0;
            for i in 0..d {
                if col[i].abs() > col[best].abs() + 1e-12 {
                    best = i;
                }
            }
            let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..d {
                v[(i, c)] = sign * col[i];
            }
        }
        let eigenvalues: Vec<f64> = kept.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut s = v.clone();
        for (c, lam) in eigenvalues.iter().enumerate() {
            let root = lam.sqrt();
            for i in 0..d {
                s[(i, c)] *= root;
            }
        }
        let q = if rank == d { DMatrix::identity(d, d) } else { &v * v.transpose() };
        let r = if rank == 0 {
            DMatrix::zeros(0, d)
        } else {
            let sts = s.transpose() * &s;
            let inv = sts.try_inverse().expect("positive diagonal Gram matrix");
            inv * s.transpose()
        };
        let flat = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut out = Vec::with_capacity(m.nrows() * m.ncols());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.push(m[(i, j)]);
                }
            }
            out
        };
        Ok(Self {
            dim: d,
            rank,
            s_flat: flat(&s),
            q_flat: flat(&q),
            r_flat: flat(&r),
            sigma_half: s,
            q,
            r,
            eigenvalues,
        })
    }

    /// `out = S z`, `z ∈ ℝ^m`.
    pub fn apply_sigma_half(&self, z: &[f64], out: &mut [f64]) {
        let m = self.rank;
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let row = &self.s_flat[i * m..(i + 1) * m];
            *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    /// Column `j` of `S`, i.e. `Σ^{1/2} e_j`.
    pub fn sigma_half_column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.s_flat[i * self.rank + j]).collect()
    }

    /// `out = R y`, `out ∈ ℝ^m`.
    pub fn apply_r(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(self.rank) {
            let row = &self.r_flat[i * d..(i + 1) * d];
            *o = row.iter().zip(y).map(|(a, b)| a * b).sum();
        }
    }

    /// `out = Q y`.
    pub fn apply_q(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        if self.rank == d {
            out[..d].copy_from_slice(&y[..d]);
            return;
        }
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.q_flat[i * d..(i + 1) * d];
            *o = row.iter().zip(y).map(|(a, b)| a * b).sum();
        }
    }

    /// `out = (I - Q) y`; exactly zero when `Σ` has full rank.
    pub fn apply_residual(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        if self.rank == d {
            out[..d].fill(0.0);
            return;
        }
        self.apply_q(y, out);
        for (o, v) in out.iter_mut().zip(y) {
            *o = v - *o;
        }
    }

    /// Frobenius residuals of `S Sᵀ = Σ`, `Q S = S` (together with `Q² = Q`
    /// and `Qᵀ = Q`), `R S = I_m` and `S R = Q`.
    pub fn identity_residuals(&self, sigma: &[f64]) -> [f64; 4] {
        let d = self.dim;
        let target = DMatrix::from_row_slice(d, d, sigma);
        let s = &self.sigma_half;
        let fro = |m: DMatrix<f64>| m.norm();
        let a = fro(s * s.transpose() - &target);
        let b = fro(&self.q * s - s)
            .max(fro(&self.q * &self.q - &self.q))
            .max(fro(self.q.transpose() - &self.q));
        let c = fro(&self.r * s - DMatrix::identity(self.rank, self.rank));
        let e = fro(s * &self.r - &self.q);
        [a, b, c, e]
    }
}
