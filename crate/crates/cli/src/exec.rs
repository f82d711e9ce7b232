//! Worker pool for per-sample parallelism.

use rayon::prelude::*;
use tnhvp::Executor;

use crate::error::CliError;

pub const WORKERS_ENV: &str = "TNHVP_WORKERS";

/// Results come back in index order, and the core reduces them in that
/// order, so the worker count never changes the numbers.
pub struct PoolExecutor {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl PoolExecutor {
    pub fn new(workers: usize) -> Result<Self, CliError> {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
        Ok(PoolExecutor { pool, workers })
    }

    /// Explicit flag, else `TNHVP_WORKERS`, else 1.
    pub fn from_env(flag: Option<usize>) -> Result<Self, CliError> {
        let n = match flag {
            Some(n) => n,
            None => match std::env::var(WORKERS_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| CliError::Config(format!("{WORKERS_ENV}={v} is not a worker count")))?,
                Err(_) => 1,
            },
        };
        Self::new(n)
    }
}

impl Executor for PoolExecutor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.workers == 1 {
            return (0..n).map(f).collect();
        }
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    fn workers(&self) -> usize {
        self.workers
    }
}
