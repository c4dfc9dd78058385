//! Data-parallel execution of per-path jobs.
//!
//! With the `parallel` feature (on by default) jobs run on a rayon pool;
//! without it every executor runs sequentially. Results always come back in
//! index order, so reductions over them do not depend on the worker count.

use std::fmt;
#[cfg(feature = "parallel")]
use std::sync::Arc;

use crate::error::{parameter, Result};

#[derive(Clone, Default)]
pub struct Executor {
    sequential: bool,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Executor {
    /// Runs every job on the calling thread.
    pub fn sequential() -> Self {
        Executor { sequential: true, ..Default::default() }
    }

    /// Uses the global rayon pool (or the calling thread when built without
    /// the `parallel` feature).
    pub fn parallel() -> Self {
        Executor::default()
    }

    /// Dedicated pool with exactly `workers` threads.
    pub fn with_workers(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(parameter("workers", "must be at least 1"));
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| parameter("workers", e.to_string()))?;
            Ok(Executor { sequential: false, pool: Some(Arc::new(pool)) })
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(Executor::sequential())
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !self.sequential
    }

    /// Evaluates `job(i)` for `i in 0..n` and returns the results in index order.
    pub fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if !self.sequential {
                let run = || (0..n).into_par_iter().map(&job).collect();
                return match &self.pool {
                    Some(pool) => pool.install(run),
                    None => run(),
                };
            }
        }
        (0..n).map(job).collect()
    }
}

impl fmt::Debug for Executor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("Executor");
        d.field("parallel", &self.is_parallel());
        #[cfg(feature = "parallel")]
        d.field("workers", &self.pool.as_ref().map(|p| p.current_num_threads()));
        d.finish()
    }
}
