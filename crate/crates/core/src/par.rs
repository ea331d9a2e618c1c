//! Data-parallel fill of large output tables.
//!
//! Every output cell is computed independently and in a fixed summation
//! order, so results are bit-identical with or without the `parallel`
//! feature and regardless of thread count.

use std::sync::atomic::{AtomicBool, Ordering};

/// Tables smaller than this are always filled on the calling thread.
pub const PAR_THRESHOLD: usize = 1 << 15;
const CHUNK: usize = 1 << 12;

static ENABLED: AtomicBool = AtomicBool::new(true);

/// Toggle parallel table fills at runtime. Without the `parallel` feature
/// this has no effect.
pub fn set_parallel(on: bool) {
    ENABLED.store(on, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && ENABLED.load(Ordering::Relaxed)
}

/// Call `f(start, chunk)` over consecutive chunks of `out`.
pub fn fill_chunks<F>(out: &mut [f64], f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_THRESHOLD && parallel_enabled() {
        use rayon::prelude::*;
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(i, chunk)| f(i * CHUNK, chunk));
        return;
    }
    for (i, chunk) in out.chunks_mut(CHUNK).enumerate() {
        f(i * CHUNK, chunk);
    }
}

/// Map `f` over `items`, in parallel when enabled. Output order matches
/// input order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}
