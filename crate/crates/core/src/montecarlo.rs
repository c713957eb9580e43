//! Replica execution with one random stream per replica.
//!
//! Results come back in replica order regardless of scheduling, so any
//! reduction over them is bit-reproducible.

use rayon::prelude::*;

use crate::rng::RandomSource;

pub fn run_replicas<T, F>(seed: u64, replicas: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut RandomSource) -> T + Sync + Send,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomSource::new(seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}
