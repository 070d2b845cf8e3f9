//! Parallel path ensembles with results independent of the thread count.
//!
//! Paths are split into fixed-size chunks; each chunk accumulates on its
//! own and the chunk results are merged in chunk order, so scheduling never
//! changes the floating-point summation order.

use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// Paths per chunk.
pub const CHUNK_PATHS: u64 = 256;

/// `LSH_THREADS` if set to a positive integer, else the machine parallelism.
pub fn worker_count() -> usize {
    std::env::var("LSH_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub trait Accumulator: Send {
    fn merge(&mut self, other: Self);
}

/// Runs `body` for every path in `0..paths` on `threads` workers.
pub fn run_paths<A, E>(
    paths: u64,
    threads: usize,
    make: impl Fn() -> A + Sync,
    body: impl Fn(&mut A, u64) -> Result<(), E> + Sync,
) -> CliResult<A>
where
    A: Accumulator,
    E: Into<CliError> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let chunks = paths.div_ceil(CHUNK_PATHS);
    let parts: Vec<A> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = make();
                let end = ((c + 1) * CHUNK_PATHS).min(paths);
                for path in c * CHUNK_PATHS..end {
                    body(&mut acc, path)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<A>, E>>()
            .map_err(Into::into)
    })?;
    let mut total = make();
    for part in parts {
        total.merge(part);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lsh_core::stats::Moments;

    struct Sum(Moments);

    impl Accumulator for Sum {
        fn merge(&mut self, other: Self) {
            self.0.merge(&other.0);
        }
    }

    fn tally(threads: usize) -> (f64, f64) {
        let acc = run_paths(
            5_000,
            threads,
            || Sum(Moments::default()),
            |acc, p| {
                acc.0.push(((p as f64) * 0.37).sin() * 1e3 + 1e-7 * p as f64);
                Ok::<(), CliError>(())
            },
        )
        .unwrap();
        (acc.0.mean(), acc.0.variance())
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let one = tally(1);
        for t in [2, 3, 8] {
            let other = tally(t);
            assert_eq!(one.0.to_bits(), other.0.to_bits());
            assert_eq!(one.1.to_bits(), other.1.to_bits());
        }
    }
}
