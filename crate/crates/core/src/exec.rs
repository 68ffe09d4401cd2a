//! Execution mode for the data-parallel stages.
//!
//! With the `parallel` feature (default) stages can fan out over the rayon
//! pool; without it every mode runs sequentially. Results never depend on
//! the mode: reductions are integer sums or order-preserving collects.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Worker count this mode will use.
    pub fn threads(self) -> usize {
        if !self.is_parallel() {
            return 1;
        }
        #[cfg(feature = "parallel")]
        {
            rayon::current_num_threads()
        }
        #[cfg(not(feature = "parallel"))]
        {
            1
        }
    }

    /// Number of partitions to split a workload of `len` items into.
    pub fn partitions(self, len: usize) -> usize {
        if !self.is_parallel() || len == 0 {
            return 1;
        }
        #[cfg(feature = "parallel")]
        {
            (rayon::current_num_threads() * 4).clamp(1, len)
        }
        #[cfg(not(feature = "parallel"))]
        {
            1
        }
    }

    /// Order-preserving map.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Folds fixed-size chunks into accumulators, then merges them. `merge`
    /// must be associative and commutative for the result to be
    /// mode-independent.
    pub fn fold_chunks<T, A, I, F, M>(self, items: &[T], chunk: usize, init: I, fold: F, merge: M) -> A
    where
        T: Sync,
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, &[T]) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_chunks(chunk).fold(&init, &fold).reduce(&init, &merge);
        }
        let _ = &merge;
        items.chunks(chunk).fold(init(), fold)
    }

    pub fn sort_unstable<T: Ord + Send>(self, v: &mut [T]) {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            v.par_sort_unstable();
            return;
        }
        v.sort_unstable();
    }
}
