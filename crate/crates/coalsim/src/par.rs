//! Replicate work pool: data-parallel over replicate indices when the
//! `parallel` feature is enabled, with an always-available sequential path.
//! Both produce results in replicate order, so output is identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Caps the global rayon pool at `n` threads. Effective only before first
/// pool use; a no-op without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> Result<(), String> {
    Ok(())
}

/// Maps `f` over replicate indices 0..n sequentially.
pub fn replicate_map_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Maps `f` over replicate indices 0..n on the rayon pool (or sequentially
/// when built without the `parallel` feature).
#[cfg(feature = "parallel")]
pub fn replicate_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn replicate_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    replicate_map_serial(n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_serial_agree() {
        let a = replicate_map(100, |k| k * k);
        let b = replicate_map_serial(100, |k| k * k);
        assert_eq!(a, b);
    }
}
