use sbr_core::Join;

/// [`Join`] backed by `rayon::join`, running on whichever pool is current.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonJoin;

impl Join for RayonJoin {
    #[inline]
    fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        rayon::join(a, b)
    }
}

/// Default worker count: `SBR_WORKERS` if set and valid, else the number of
/// hardware threads.
pub fn default_workers() -> usize {
    std::env::var("SBR_WORKERS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool(workers: usize) -> Result<rayon::ThreadPool, rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .thread_name(|i| format!("sbr-worker-{i}"))
        .build()
}
