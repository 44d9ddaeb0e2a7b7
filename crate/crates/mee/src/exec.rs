//! Rayon-backed parallelism. Results come back in index order, so reductions
//! stay deterministic for any thread count.

use mee_core::estimator::ChunkExecutor;
use mee_core::Result;
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// Runs objective chunks on the current rayon pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl ChunkExecutor for RayonExecutor {
    fn run(&self, chunks: usize, task: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)) -> Vec<Result<Vec<f64>>> {
        (0..chunks).into_par_iter().map(task).collect()
    }
}

/// `f(0), ..., f(reps - 1)` in parallel, in order.
pub fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(reps: usize, f: F) -> Vec<T> {
    (0..reps).into_par_iter().map(f).collect()
}

/// Thread pool sized by `threads`, falling back to `HMM_MEE_THREADS`, then
/// to rayon's default.
pub fn thread_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var("HMM_MEE_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("HMM_MEE_THREADS: not a count: `{v}`")))?,
            ),
            _ => None,
        },
    };
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("thread count must be positive".into()));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}
