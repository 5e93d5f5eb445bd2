//! Running statistics and the deterministic batched sampling loop shared by
//! the estimators.
//!
//! Samples are grouped in fixed-size batches. Batch `b` draws from its own
//! ChaCha stream `(seed, b)`, batches are evaluated concurrently and then
//! committed strictly in sample order, and the stop rule is tested after
//! every committed sample. The result therefore does not depend on the
//! worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const BATCH_SIZE: usize = 16;
pub const MIN_SAMPLES: usize = 10;
/// Environment variable read by [`default_workers`].
pub const WORKERS_ENV: &str = "FIRSTPASS_WORKERS";

/// Worker count from `FIRSTPASS_WORKERS`, else the available cores.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Target coefficient of variation.
    pub tol: f64,
    pub n_max: usize,
    pub min_samples: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            tol: 0.1,
            n_max: 10_000,
            min_samples: MIN_SAMPLES,
            seed: 0,
            workers: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidArgument(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.min_samples < 2 {
            return Err(Error::InvalidArgument("min_samples must be at least 2".into()));
        }
        if self.n_max < self.min_samples {
            return Err(Error::InvalidArgument(format!(
                "n_max = {} is below the minimum sample count {}",
                self.n_max, self.min_samples
            )));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        Ok(())
    }
}

/// Welford mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
    any_nonzero: bool,
}

impl RunningStats {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
        self.any_nonzero |= v != 0.0;
    }

    pub fn count(&self) -> usize {
        self.count
    }
    pub fn mean(&self) -> f64 {
        self.mean
    }
    pub fn any_nonzero(&self) -> bool {
        self.any_nonzero
    }

    /// Sample standard deviation with divisor `j - 1`.
    pub fn std_dev(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        (self.m2.max(0.0) / (self.count - 1) as f64).sqrt()
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std_dev() / (self.count as f64).sqrt()
    }

    /// `sd / (|mean| sqrt(j))`, infinite while undefined or when the mean is negligible.
    pub fn cov(&self) -> f64 {
        if self.count < 2 || self.mean.abs() < 1e-300 {
            return f64::INFINITY;
        }
        self.std_error() / self.mean.abs()
    }
}

/// Drive `draw` until `commit` returns `true` or `n_max` samples are committed.
///
/// `draw` gets the sample index and the batch RNG; it is called in sample
/// order within each batch. Returns the number of committed samples.
pub fn run_batched<T, D, C>(cfg: &SamplerConfig, draw: D, mut commit: C) -> Result<usize>
where
    T: Send,
    D: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
    C: FnMut(usize, T) -> bool,
{
    let run_batch = |b: usize| -> Result<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(b as u64);
        let start = b * BATCH_SIZE;
        let end = (start + BATCH_SIZE).min(cfg.n_max);
        (start..end).map(|j| draw(j, &mut rng)).collect()
    };
    let total_batches = cfg.n_max.div_ceil(BATCH_SIZE);
    let workers = cfg.workers.max(1);
    let pool = if workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let mut committed = 0;
    let mut next = 0;
    while next < total_batches {
        let round = (total_batches - next).min(workers * 2);
        let results: Vec<Result<Vec<T>>> = match &pool {
            Some(p) => p.install(|| (next..next + round).into_par_iter().map(run_batch).collect()),
            None => (next..next + round).map(run_batch).collect(),
        };
        next += round;
        for batch in results {
            for item in batch? {
                let idx = committed;
                committed += 1;
                if commit(idx, item) {
                    return Ok(committed);
                }
            }
        }
    }
    Ok(committed)
}
