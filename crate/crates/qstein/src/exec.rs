//! Rayon-backed executor.

use qstein_core::exec::Executor;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable capping the worker count; 0 or unset means automatic.
pub const THREADS_ENV: &str = "QSTEIN_THREADS";

/// Executor running jobs on a dedicated rayon pool. Results come back in job
/// order, so reductions over them do not depend on the worker count.
pub struct Threaded {
    pool: ThreadPool,
}

impl Threaded {
    /// `threads == 0` picks the rayon default.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Threaded { pool })
    }

    /// Pool sized from `QSTEIN_THREADS`.
    pub fn from_env() -> Result<Self, String> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => v
                .trim()
                .parse::<usize>()
                .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))?,
            _ => 0,
        };
        Threaded::new(threads).map_err(|e| e.to_string())
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Threaded {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qstein_core::exec::Sequential;
    use qstein_core::sampler::{sample, Source};
    use qstein_core::QGaussian;

    #[test]
    fn keeps_job_order() {
        let ex = Threaded::new(4).unwrap();
        let v = ex.map_indexed(1000, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, x)| *x == i * i));
    }

    #[test]
    fn matches_sequential_bit_for_bit() {
        let p = QGaussian::standard(3, 0.4).unwrap();
        let a = sample(&p, 20_000, 8, Source::Escort, &Sequential).unwrap();
        let b = sample(&p, 20_000, 8, Source::Escort, &Threaded::new(3).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
