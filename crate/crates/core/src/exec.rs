//! Execution strategy for the data-parallel inner loops.
//!
//! With the `parallel` feature (default) the loops fan out over rayon; without
//! it, or with [`Execution::Sequential`], they run on the calling thread.
//! Results are identical either way: maps preserve input order and every
//! reduction happens afterwards in a fixed order.

/// How a batch of independent work items is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Execution {
    /// Applies `f` to each item, returning results in input order.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        match self {
            Execution::Sequential => items.into_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
        }
    }

    /// Maps over `0..len`, returning results in index order.
    pub fn map_range<R, F>(self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Send + Sync,
    {
        match self {
            Execution::Sequential => (0..len).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
        }
    }
}

/// Caps the global rayon pool. Has no effect if the pool is already built or
/// the `parallel` feature is off.
pub fn init_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
