//! Execution strategy for embarrassingly parallel work (grid sweeps,
//! multi-start solver runs).
//!
//! With the `parallel` feature (default) enabled, `ExecMode::Parallel`
//! dispatches through rayon; results are collected in task order, so parallel
//! and sequential execution produce identical output for deterministic tasks.
//! Without the feature the crate falls back to sequential execution and
//! `ExecMode::Parallel` is a no-op alias for `Sequential`.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// Run `f(0..n)` and collect results in index order.
pub fn run_indexed<T, F>(n: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => run_parallel(n, f),
    }
}

#[cfg(feature = "parallel")]
fn run_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
