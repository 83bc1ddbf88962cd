//! Free-running mode: each logical thread is driven by `block_on` on its own
//! OS thread. Accesses serialize on the world mutex, so the recorded order
//! is still a sequentially consistent total order; interleavings depend on
//! the OS plus random yields and are not reproducible.

use std::future::Future;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lock_world, Abort, Ctx, Mutation, SharedWorld};

/// Runs one task per thread to completion and returns the first abort.
pub fn run_threads<F, Fut>(world: SharedWorld, threads: usize, seed: u64, yield_pct: u32, mutations: &[Mutation], body: F) -> Result<(), Abort>
where
    F: Fn(u32, Ctx) -> Fut + Sync,
    Fut: Future<Output = Result<(), Abort>>,
{
    let results: Vec<Result<(), Abort>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads as u32)
            .map(|tid| {
                let world = Arc::clone(&world);
                let body = &body;
                s.spawn(move || {
                    let rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(tid) << 32));
                    let ctx = Ctx::free(world, tid, rng, yield_pct, mutations.to_vec());
                    futures::executor::block_on(body(tid, ctx))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    drop(lock_world(&world));
    results.into_iter().collect()
}
