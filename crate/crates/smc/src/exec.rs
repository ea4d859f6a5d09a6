//! Thread-pool executor for replicate- and node-level parallelism.

use std::num::NonZeroUsize;

use smc_core::parallel::Executor;

/// Splits jobs into contiguous blocks, one scoped thread per block. Results come
/// back in index order, so output never depends on the worker count.
#[derive(Clone, Copy, Debug)]
pub struct Threaded {
    workers: usize,
}

impl Threaded {
    pub fn new(workers: usize) -> Self {
        Threaded { workers: workers.max(1) }
    }

    /// Worker count from `SMC_THREADS`, else `flag`, else the machine's parallelism.
    pub fn from_env(flag: Option<usize>) -> Self {
        let env = std::env::var("SMC_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok());
        let n = env.or(flag).filter(|n| *n > 0).unwrap_or_else(|| std::thread::available_parallelism().map(NonZeroUsize::get).unwrap_or(1));
        Threaded::new(n)
    }
}

impl Default for Threaded {
    fn default() -> Self {
        Threaded::from_env(None)
    }
}

fn block(n: usize, workers: usize) -> usize {
    n.div_ceil(workers.min(n).max(1))
}

impl Executor for Threaded {
    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, n: usize, f: F) -> Vec<T> {
        if self.workers == 1 || n <= 1 {
            return (0..n).map(f).collect();
        }
        let size = block(n, self.workers);
        let f = &f;
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(size)
                .map(|lo| s.spawn(move || (lo..(lo + size).min(n)).map(f).collect::<Vec<T>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    }

    fn for_each_mut<T: Send, F: Fn(usize, &mut T) + Sync>(&self, items: &mut [T], f: F) {
        let n = items.len();
        if self.workers == 1 || n <= 1 {
            items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
            return;
        }
        let size = block(n, self.workers);
        let f = &f;
        std::thread::scope(|s| {
            for (c, chunk) in items.chunks_mut(size).enumerate() {
                s.spawn(move || chunk.iter_mut().enumerate().for_each(|(i, x)| f(c * size + i, x)));
            }
        });
    }

    fn workers(&self) -> usize {
        self.workers
    }
}
