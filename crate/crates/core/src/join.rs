//! Fork-join hook for the parallel-capable kernels.
//!
//! BVH construction, grid tracing and the pairwise field reduction all split
//! their work into a fixed binary tree. The tree shape never depends on the
//! scheduler, so any [`Join`] implementation produces bit-identical output.

/// Runs two closures, possibly in parallel, and returns both results.
pub trait Join: Sync {
    fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send;
}

/// Runs both closures on the calling thread, left first.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Join for Sequential {
    #[inline]
    fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        let ra = a();
        (ra, b())
    }
}
