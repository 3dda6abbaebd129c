//! Thread-count control for the data-parallel parts of the pipeline.
//!
//! Every parallel loop in this crate writes disjoint output rows, so results
//! do not depend on the thread count. `IOCC_THREADS=0` (or `1`) runs on a
//! single thread.

use std::sync::Once;

pub const THREADS_ENV: &str = "IOCC_THREADS";

static INIT: Once = Once::new();

/// Sizes the global rayon pool; only the first call in a process has an
/// effect. `0` means a single thread.
pub fn configure(threads: usize) {
    INIT.call_once(|| {
        // A pool may already exist if the host application built one.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    });
}

/// Reads `IOCC_THREADS` and sizes the global rayon pool once.
/// Returns the number of worker threads requested (0 meaning serial).
pub fn configure_from_env() -> usize {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    if let Some(n) = requested {
        configure(n);
    }
    requested.unwrap_or(0)
}
