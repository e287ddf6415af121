use super::{norm2, SimulatedLevyPath};
use super::simulate::JumpRecord;
use crate::paths::{CadlagPath, TimeGrid};
use serde::{Deserialize, Serialize};

/// Times `0 = t_0 < ... < t_k = T` with gaps at most `2^{-n}` that contain
/// every jump of size at least `2^{-n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingPartition {
    pub level: u32,
    pub times: Vec<f64>,
}

impl StoppingPartition {
    pub fn k(&self) -> usize {
        self.times.len() - 1
    }
}

/// `t_{i+1} = inf{t > t_i : |ΔX(t)|_2 >= 2^{-n}} ∧ (t_i + 2^{-n}) ∧ T`,
/// evaluated on a recorded jump list.
pub fn stopping_partition_from(jumps: &[JumpRecord], horizon: f64, level: u32) -> StoppingPartition {
    let mesh = 0.5f64.powi(level as i32);
    let mut big: Vec<f64> = jumps.iter().filter(|j| norm2(&j.y) >= mesh).map(|j| j.time).collect();
    big.sort_by(f64::total_cmp);
    let mut times = vec![0.0];
    let mut t = 0.0;
    let mut next = 0;
    while t < horizon {
        while next < big.len() && big[next] <= t {
            next += 1;
        }
        let mut u = (t + mesh).min(horizon);
        if next < big.len() && big[next] < u {
            u = big[next];
        }
        times.push(u);
        t = u;
    }
    StoppingPartition { level, times }
}

pub fn stopping_partition(path: &SimulatedLevyPath, level: u32) -> StoppingPartition {
    stopping_partition_from(&path.jumps, path.x.horizon(), level)
}

/// `X^n(t) = Σ_i X(t_i) 1_{[t_i, t_{i+1})}(t) + X(T) 1_{{T}}(t)` on the union
/// of the path's knots and the partition times.
pub fn piecewise_approx(x: &CadlagPath, partition: &StoppingPartition) -> CadlagPath {
    let d = x.dim();
    let mut knots: Vec<f64> = x.grid().knots().iter().chain(&partition.times).copied().collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let grid = TimeGrid::new(knots).expect("union of two grids");
    let n = grid.len();
    let times = &partition.times;
    let mut values = Vec::with_capacity(n * d);
    let mut left = Vec::with_capacity(n * d);
    let mut jump = vec![false; n];
    let mut held: Vec<f64> = x.at(0.0).to_vec();
    let mut i = 0;
    for (k, &t) in grid.knots().iter().enumerate() {
        let before = held.clone();
        if k == n - 1 {
            held = x.at(t).to_vec();
        } else {
            while i + 1 < times.len() && times[i + 1] <= t {
                i += 1;
            }
            if times[i] == t {
                held = x.at(t).to_vec();
            }
        }
        values.extend_from_slice(&held);
        if k > 0 && before != held {
            left.extend_from_slice(&before);
            jump[k] = true;
        } else {
            left.extend_from_slice(&held);
        }
    }
    CadlagPath::from_parts(grid, d, values, left, jump).expect("piecewise path")
}
