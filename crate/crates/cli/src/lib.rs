//! Experiment harness behind the `dolce` binary: configuration, Monte Carlo
//! sweeps, the dataset estimator command and the oracle checks.

pub mod config;
pub mod estimate;
pub mod ope;
pub mod opl;
pub mod oracle_check;
pub mod output;

/// Runs `f` on a dedicated pool of `jobs` threads.
pub fn run_parallel<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}
