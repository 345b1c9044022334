//! Seeded percentile bootstrap over row indices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{quantile_sorted, sample_sd};
use crate::error::{Error, Result};

pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> BootstrapOptions {
        BootstrapOptions {
            replicates,
            level: DEFAULT_LEVEL,
            seed,
        }
    }
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions::new(DEFAULT_REPLICATES, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub ci: BootstrapCI,
    /// Replicate statistics in draw order; exactly `replicates` long.
    pub estimates: Vec<f64>,
}

impl Bootstrap {
    /// Standard deviation of the replicate statistics.
    pub fn standard_error(&self) -> f64 {
        sample_sd(&self.estimates).unwrap_or(0.0)
    }
}

/// Resamples `n` rows with replacement `replicates` times and evaluates
/// `statistic` on each resample's indices.
///
/// Resamples on which the statistic is undefined (`None`) are redrawn, up to
/// ten attempts per requested replicate in total.
pub fn bootstrap<F>(n: usize, mut statistic: F, opts: BootstrapOptions) -> Result<Bootstrap>
where
    F: FnMut(&[usize]) -> Option<f64>,
{
    if opts.replicates < MIN_REPLICATES {
        return Err(Error::Config(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
            opts.replicates
        )));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Config(format!(
            "confidence level {} outside (0,1)",
            opts.level
        )));
    }
    if n == 0 {
        return Err(Error::EmptySelection);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let max_attempts = 10 * opts.replicates;
    let mut estimates = Vec::with_capacity(opts.replicates);
    let mut sample = vec![0usize; n];
    let mut attempts = 0;
    while estimates.len() < opts.replicates && attempts < max_attempts {
        attempts += 1;
        for slot in sample.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        if let Some(v) = statistic(&sample).filter(|v| v.is_finite()) {
            estimates.push(v);
        }
    }
    if estimates.len() < opts.replicates {
        return Err(Error::BootstrapFailure {
            attempts,
            successes: estimates.len(),
        });
    }
    let mut sorted = estimates.clone();
    sorted.sort_by(f64::total_cmp);
    let alpha = (1.0 - opts.level) / 2.0;
    Ok(Bootstrap {
        ci: BootstrapCI {
            low: quantile_sorted(&sorted, alpha),
            high: quantile_sorted(&sorted, 1.0 - alpha),
            level: opts.level,
            replicates: opts.replicates,
            seed: opts.seed,
        },
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_of(data: &[f64]) -> impl FnMut(&[usize]) -> Option<f64> + '_ {
        move |idx| Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64)
    }

    #[test]
    fn constant_data_gives_degenerate_interval() {
        let data = [5.0, 5.0, 5.0];
        let b = bootstrap(3, mean_of(&data), BootstrapOptions::new(200, 1)).unwrap();
        assert_eq!((b.ci.low, b.ci.high), (5.0, 5.0));
    }

    #[test]
    fn deterministic_for_seed() {
        let data: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = bootstrap(50, mean_of(&data), BootstrapOptions::new(300, 9)).unwrap();
        let b = bootstrap(50, mean_of(&data), BootstrapOptions::new(300, 9)).unwrap();
        assert_eq!(a, b);
        let c = bootstrap(50, mean_of(&data), BootstrapOptions::new(300, 10)).unwrap();
        assert_ne!(a.estimates, c.estimates);
    }

    #[test]
    fn records_exactly_b_and_endpoints_bracket_order_statistics() {
        let data: Vec<f64> = (0..40).map(|i| (i * i % 17) as f64).collect();
        let b = bootstrap(40, mean_of(&data), BootstrapOptions::new(1000, 3)).unwrap();
        assert_eq!(b.estimates.len(), 1000);
        let mut s = b.estimates.clone();
        s.sort_by(f64::total_cmp);
        // (B-1) * 0.025 = 24.975 -> between the 25th and 26th order statistics
        assert!(s[24] <= b.ci.low && b.ci.low <= s[25]);
        assert!(s[974] <= b.ci.high && b.ci.high <= s[975]);
        assert!(b.ci.low <= b.ci.high);
    }

    #[test]
    fn undefined_statistic_is_redrawn_or_fails() {
        let mut k = 0;
        let half = bootstrap(
            10,
            |_| {
                k += 1;
                (k % 2 == 0).then_some(1.0)
            },
            BootstrapOptions::new(100, 0),
        )
        .unwrap();
        assert_eq!(half.estimates.len(), 100);

        let err = bootstrap(10, |_| None, BootstrapOptions::new(100, 0)).unwrap_err();
        assert_eq!(
            err,
            Error::BootstrapFailure {
                attempts: 1000,
                successes: 0
            }
        );
    }

    #[test]
    fn rejects_small_b() {
        assert!(bootstrap(3, |_| Some(1.0), BootstrapOptions::new(10, 0)).is_err());
    }
}
