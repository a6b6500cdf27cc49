//! Deterministic trial-parallel execution.
//!
//! Trials are grouped into fixed-size chunks. Each chunk is folded
//! sequentially and the chunk results are merged in index order, so the
//! floating-point result is independent of the number of worker threads.

use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Trials per deterministic reduction chunk.
pub const CHUNK: usize = 64;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SDMIMO_THREADS";

fn default_pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or(0);
        ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
    })
}

/// Runs `f` inside the shared pool sized by `SDMIMO_THREADS`.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    if rayon::current_thread_index().is_some() {
        return f();
    }
    default_pool().install(f)
}

/// Runs `f` in a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

/// `f(0..n)` evaluated in parallel, returned in trial order.
pub fn map_trials<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Folds trials `0..n` into an accumulator with a thread-independent order.
pub fn fold_trials<A, I, F, M>(n: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(A, A) -> A,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<A> = install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                for t in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    fold(&mut acc, t);
                }
                acc
            })
            .collect()
    });
    partial.into_iter().fold(init(), merge)
}
