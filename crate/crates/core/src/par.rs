//! Replica-level data parallelism.
//!
//! With the `parallel` feature (default) replicas are spread over a rayon
//! pool; without it, or with [`Execution::Sequential`], they run in order on
//! the calling thread. Results are always returned in replica order, so every
//! reduction downstream is performed in the same order whichever path ran.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate was built with rayon, otherwise `Sequential`.
    pub fn effective(self) -> Self {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluate `job(i)` for `i in 0..count`, in index order.
pub fn map_indexed<T, F>(exec: Execution, count: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    match exec.effective() {
        Execution::Sequential => (0..count).map(job).collect(),
        Execution::Parallel => parallel_map(count, job),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(count: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(job).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(count: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..count).map(job).collect()
}

/// Like [`map_indexed`] over a slice.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], job: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Send + Sync,
{
    map_indexed(exec, items.len(), |i| job(&items[i]))
}

/// Configure the global pool size. Only the first call has an effect.
pub fn set_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
