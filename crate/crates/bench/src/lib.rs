//! Shared fixtures for the benchmarks.

use dpcov::seed::rng_for;
use dpcov::{generate_data, DataMatrix, ModelKind, SigmaSpec, TestConfig};

/// Gaussian null data with identity covariance.
pub fn null_data(n: usize, d: usize, seed: u64) -> DataMatrix {
    generate_data(ModelKind::Gaussian, &SigmaSpec::default(), n, d, &mut rng_for(seed, 0, 0)).expect("valid dimensions")
}

/// Test configuration with a reduced calibration sample.
pub fn config(epsilon: f64, mc_samples: usize) -> TestConfig {
    let mut c = TestConfig::new(epsilon).expect("positive budget");
    c.mc_samples = mc_samples;
    c
}
