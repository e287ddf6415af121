//! Ensemble statistics with order-independent reductions.

use serde::{Deserialize, Serialize};

/// Pairwise (tree) sum. The association pattern depends only on the length,
/// so results do not change with how the inputs were produced.
pub fn tree_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if xs.len() <= LEAF {
        return xs.iter().fold(0.0, |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
}

/// Mean, standard error of the mean, and root mean square of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub rms: f64,
    pub n: usize,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary { mean: f64::NAN, std_error: f64::NAN, rms: f64::NAN, n };
    }
    let nf = n as f64;
    let mean = tree_sum(xs) / nf;
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let rms = (tree_sum(&sq) / nf).sqrt();
    let std_error = if n > 1 {
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        (tree_sum(&dev) / (nf - 1.0) / nf).sqrt()
    } else {
        0.0
    };
    Summary { mean, std_error, rms, n }
}

/// Sample excess-free kurtosis E[(x-m)^4]/var^2 together with a standard error
/// estimate for it, using the delta-method approximation sqrt(24/n).
pub fn kurtosis(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = tree_sum(xs) / n;
    let d2: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let d4: Vec<f64> = xs.iter().map(|x| (x - m).powi(4)).collect();
    let v = tree_sum(&d2) / n;
    (tree_sum(&d4) / n / (v * v), (24.0 / n).sqrt())
}

/// Ordinary least squares fit of `y = a + b x`; returns `(b, se(b))`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = tree_sum(x) / nf;
    let my = tree_sum(y) / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let se = if n > 2 {
        let a = my - b * mx;
        let sse: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((b, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn summary_of_known_sample() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!((s.rms - 7.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slope_of_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 0.5 * v).collect();
        let (b, se) = ols_slope(&x, &y).unwrap();
        assert!((b + 0.5).abs() < 1e-14);
        assert!(se < 1e-14);
    }

    proptest! {
        #[test]
        fn tree_sum_close_to_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..300)) {
            let naive: f64 = xs.iter().sum();
            let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((tree_sum(&xs) - naive).abs() <= 1e-12 * scale);
        }
    }
}
