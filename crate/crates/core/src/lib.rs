//! Differentially private integrated tests for large-dimensional covariance
//! structure.
//!
//! The pipeline runs: data → [`spectra`] → [`privacy`] (two-stage Laplace
//! release of the eigenvalues) → [`moments`] (null calibration against the
//! Marchenko–Pastur law in [`rmt`]) → [`inference`] (statistics, Monte Carlo
//! critical value, decision). [`simulation`] drives size/power experiments.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inference;
pub mod moments;
pub mod privacy;
pub mod quadrature;
pub mod rmt;
pub mod seed;
pub mod simulation;
pub mod spectra;

pub use error::{Error, Result};
pub use inference::{
    clr_statistic, compute_l, critical_value, lr_statistic, p_value_max, run_test, run_test_spectrum, standardize,
    to_json, CriticalValue, Decision, TestConfig, TestReport, TestStatistics,
};
pub use moments::{b_g, b_gg, moment_table, Kappa, LossFunction, MomentCache, MomentTable, NoiseLaw};
pub use privacy::{
    empirical_sensitivity, laplace_noise, privatize_spectrum, trace_ratio_bound, trace_tail_bound, PrivacyParams,
    PrivatizedSpectrum, SensitivityBound,
};
pub use rmt::{
    classical_locations, solve_generalized_mp, MarchenkoPastur, PopulationMeasure, SolverOptions, SpectralDistribution,
    SpectralLaw,
};
pub use simulation::{generate_data, run_experiment, ExperimentConfig, ExperimentResult, ModelKind, SigmaSpec};
pub use spectra::{correlation_spectrum, covariance_spectrum, DataMatrix, Source, SpectrumResult};
