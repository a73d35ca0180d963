//! Execution strategy for the data-parallel inner loops (per-post scoring,
//! per-pair classification, per-cell generation).
//!
//! With the `parallel` feature the default is [`Execution::Parallel`], backed
//! by rayon. Without it only [`Execution::Sequential`] exists. Both strategies
//! return results in input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Runs on the global rayon pool, or on a dedicated pool with the given
    /// number of threads.
    #[cfg(feature = "parallel")]
    Parallel {
        threads: Option<usize>,
    },
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel { threads: None }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Parallel on `threads` workers when available, sequential otherwise.
    pub fn with_threads(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            if threads > 1 {
                return Execution::Parallel {
                    threads: Some(threads),
                };
            }
        }
        let _ = threads;
        Execution::Sequential
    }

    pub fn is_parallel(self) -> bool {
        !matches!(self, Execution::Sequential)
    }

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel { threads } => {
                use rayon::prelude::*;
                match threads {
                    None => items.par_iter().map(f).collect(),
                    Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                        Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
                        Err(_) => items.iter().map(f).collect(),
                    },
                }
            }
        }
    }
}
