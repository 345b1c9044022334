//! Synthetic workloads for the engine benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spurious_core::{CausalConfig, Column, Dataset};

/// Observational table with `n` rows and `p` continuous covariates: a binary
/// cause whose propensity depends on the first two covariates, and a
/// continuous outcome confounded by the first.
pub fn synthetic(n: usize, p: usize, seed: u64) -> Dataset {
    assert!(p >= 2, "need at least two covariates");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let z: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal()).collect()).collect();
    let noise: Vec<f64> = (0..n).map(|_| normal()).collect();
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let pr = 1.0 / (1.0 + (-(z[0][i] - 0.5 * z[1][i])).exp());
            f64::from(u8::from(rng.random::<f64>() < pr))
        })
        .collect();
    let y: Vec<f64> = (0..n).map(|i| 0.5 * x[i] + z[0][i] + noise[i]).collect();
    let mut cols = vec![
        Column::numeric("x", x.into_iter().map(Some).collect()),
        Column::numeric("y", y.into_iter().map(Some).collect()),
    ];
    cols.extend(
        z.into_iter().enumerate().map(|(j, v)| {
            Column::numeric(format!("z{}", j + 1), v.into_iter().map(Some).collect())
        }),
    );
    Dataset::new(format!("synthetic-{n}-{p}-{seed}"), cols).expect("columns are consistent")
}

/// Config with cause `x`, outcome `y` and every `z` as a covariate.
pub fn config(ds: &Dataset) -> CausalConfig {
    CausalConfig::with_all_covariates(ds, "x", "y")
}
