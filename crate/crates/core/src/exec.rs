//! Sample-level parallelism hook.
//!
//! The core crate never spawns threads. An [`Executor`] maps an index range to
//! results; callers reduce them in index order, so the reduction is the same
//! whatever the worker count.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `f(0), …, f(n-1)` and returns the results in index order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;

    fn workers(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialExecutor;

impl Executor for SequentialExecutor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
