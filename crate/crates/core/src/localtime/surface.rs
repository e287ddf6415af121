use super::LocalTimeError;
use crate::paths::CadlagPath;
use std::io::Write;

/// `L^x_t` of one Brownian coordinate on a space grid × the path's knots.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeSurface {
    pub xs: Vec<f64>,
    pub times: Vec<f64>,
    /// Tanaka estimator, row `g` holds `L^{x_g}_{t_k}` for all `k`.
    pub values: Vec<f64>,
    /// Occupation-kernel estimator `(1/2ε) |{s ≤ t : |B(s) - x| < ε}|`.
    pub occupation: Vec<f64>,
    pub bandwidth: f64,
}

impl LocalTimeSurface {
    pub fn at(&self, g: usize, k: usize) -> f64 {
        self.values[g * self.times.len() + k]
    }

    pub fn occupation_at(&self, g: usize, k: usize) -> f64 {
        self.occupation[g * self.times.len() + k]
    }

    /// Trapezoid `∫ L^x_{t_k} dx` over the space grid.
    pub fn space_integral(&self, k: usize) -> f64 {
        self.xs.windows(2).enumerate().map(|(g, w)| 0.5 * (self.at(g, k) + self.at(g + 1, k)) * (w[1] - w[0])).sum()
    }

    /// CSV with columns `x,t,L,L_occupation`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "t", "L", "L_occupation"])?;
        for (g, x) in self.xs.iter().enumerate() {
            for (k, t) in self.times.iter().enumerate() {
                w.write_record([
                    format!("{x:?}"),
                    format!("{t:?}"),
                    format!("{:?}", self.at(g, k)),
                    format!("{:?}", self.occupation_at(g, k)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Local-time surface of coordinate `j` of `b`.
///
/// The Tanaka estimator `|B(t)-x| - |B(0)-x| - Σ sgn(B_k - x) ΔB_k` is
/// accumulated cell by cell: a cell contributes `|B_{k+1} - x|` when
/// `B_k = x`, `2|B_{k+1} - x|` when it strictly crosses `x`, and `0` otherwise, which
/// is the same sum without cancellation.
pub fn local_time_surface(b: &CadlagPath, j: usize, xs: &[f64], bandwidth: f64) -> Result<LocalTimeSurface, LocalTimeError> {
    if !(bandwidth > 0.0) {
        return Err(LocalTimeError::BadBandwidth(bandwidth));
    }
    if j >= b.dim() {
        return Err(LocalTimeError::IndexOutOfRange { index: j, dim: b.dim() });
    }
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LocalTimeError::BadSpaceGrid);
    }
    let times = b.grid().knots().to_vec();
    let nk = times.len();
    let mut values = vec![0.0; xs.len() * nk];
    let mut occupation = vec![0.0; xs.len() * nk];
    for (g, &x) in xs.iter().enumerate() {
        let row = &mut values[g * nk..(g + 1) * nk];
        let occ = &mut occupation[g * nk..(g + 1) * nk];
        for k in 0..nk - 1 {
            let a = b.value(k)[j] - x;
            let c = b.value(k + 1)[j] - x;
            let inc = if a == 0.0 {
                c.abs()
            } else if c != 0.0 && (a < 0.0) != (c < 0.0) {
                2.0 * c.abs()
            } else {
                0.0
            };
            row[k + 1] = row[k] + inc;
            let dt = times[k + 1] - times[k];
            occ[k + 1] = occ[k] + if a.abs() < bandwidth { dt / (2.0 * bandwidth) } else { 0.0 };
        }
    }
    Ok(LocalTimeSurface { xs: xs.to_vec(), times, values, occupation, bandwidth })
}

/// Simple functional `Σ F_{i,j} 1_{(s_i, s_{i+1}]}(t) 1_{(x_j, x_{j+1}]}(x)`;
/// `coefficients` is row-major with `(times.len()-1) × (xs.len()-1)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleFunctional {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub coefficients: Vec<f64>,
}

fn position(grid: &[f64], v: f64) -> Result<usize, LocalTimeError> {
    grid.iter().position(|&g| g == v).ok_or(LocalTimeError::OffSurfaceGrid(v))
}

/// `Σ F_{i,j} (L^{x_{j+1}}_{s_{i+1}∧t} - L^{x_{j+1}}_{s_i∧t} - L^{x_j}_{s_{i+1}∧t} + L^{x_j}_{s_i∧t})`.
pub fn simple_integral(f: &SimpleFunctional, surface: &LocalTimeSurface, t: f64) -> Result<f64, LocalTimeError> {
    let (p, q) = (f.times.len().saturating_sub(1), f.xs.len().saturating_sub(1));
    if f.coefficients.len() != p * q {
        return Err(LocalTimeError::CoefficientShape { expected: p * q, found: f.coefficients.len() });
    }
    let ti: Vec<usize> = f.times.iter().map(|&s| position(&surface.times, s.min(t))).collect::<Result<_, _>>()?;
    let xi: Vec<usize> = f.xs.iter().map(|&x| position(&surface.xs, x)).collect::<Result<_, _>>()?;
    let l = |g: usize, k: usize| surface.at(g, k);
    let mut acc = 0.0;
    for i in 0..p {
        for jj in 0..q {
            let c = f.coefficients[i * q + jj];
            if c == 0.0 {
                continue;
            }
            let (k0, k1, g0, g1) = (ti[i], ti[i + 1], xi[jj], xi[jj + 1]);
            acc += c * (l(g1, k1) - l(g1, k0) - l(g0, k1) + l(g0, k0));
        }
    }
    Ok(acc)
}
