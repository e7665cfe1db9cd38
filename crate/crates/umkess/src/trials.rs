//! Deterministic trial batches. Each trial's seed is derived from the batch
//! seed and its index alone, so a batch produces identical results whether
//! it runs on one thread or many — the parallel and sequential runners are
//! interchangeable and only differ in wall-clock time.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 output function.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `index` of a batch: the index-th output of a splitmix64
/// stream seeded with `base_seed`. Random access — no sequential state — is
/// what makes parallel execution order-independent.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    mix(base_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Runs `count` trials one after another on the calling thread.
pub fn run_trials_sequential<T, F>(base_seed: u64, count: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    (0..count).map(|i| job(trial_seed(base_seed, i))).collect()
}

/// Runs `count` trials across the rayon thread pool, yielding results in
/// trial order. Without the `parallel` feature this is the sequential
/// runner under the same signature.
#[cfg(feature = "parallel")]
pub fn run_trials<T, F>(base_seed: u64, count: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| job(trial_seed(base_seed, i)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_trials<T, F>(base_seed: u64, count: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    run_trials_sequential(base_seed, count, job)
}
