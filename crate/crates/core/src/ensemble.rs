//! Deterministic parallel map over path indices.

use rayon::prelude::*;

/// Worker count used when none is given: the available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// `(0..m).map(f)` evaluated on a pool of `workers` threads, results in
/// index order. Each item must depend only on its index.
pub fn map_indexed<T, F>(workers: usize, m: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || m <= 1 {
        return (0..m).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..m).into_par_iter().map(&f).collect()),
        Err(_) => (0..m).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let a = map_indexed(1, 100, |i| i * i);
        let b = map_indexed(4, 100, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
        assert!(map_indexed(3, 0, |i| i).is_empty());
    }
}
