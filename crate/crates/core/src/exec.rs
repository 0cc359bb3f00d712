//! Execution strategy for chunked work.

use alloc::vec::Vec;

/// Runs `n` independent jobs and returns their results in job order.
///
/// Implementations may run jobs concurrently but must return results indexed
/// by job, so reductions that fold the results left to right are bit-stable
/// regardless of the worker count.
pub trait Executor: Sync {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
