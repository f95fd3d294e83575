//! Worker pool sized by the `ISB_THREADS` environment variable.

pub const THREADS_ENV: &str = "ISB_THREADS";

/// Thread cap from `ISB_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Run `f` on a pool capped by `ISB_THREADS` (rayon's default otherwise).
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}
