//! Privatized statistics, Monte Carlo calibration and the test decision.

use std::io::Write;

use nalgebra::{Cholesky, Matrix3, Vector3};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::moments::{Kappa, LossFunction, MomentCache, MomentTable, NoiseLaw, DEFAULT_NODES};
use crate::privacy::{privatize_spectrum, PrivacyParams, PrivatizedSpectrum};
use crate::rmt::MarchenkoPastur;
use crate::seed::{self, stream};
use crate::spectra::{correlation_spectrum, covariance_spectrum, DataMatrix, Source, SpectrumResult};

/// `(1/K) Σ g(λ̃ᵢ)`.
pub fn compute_l(privatized: &[f64], g: LossFunction) -> Result<f64> {
    if privatized.is_empty() {
        return Err(Error::Input("empty spectrum".into()));
    }
    if g == LossFunction::G1 {
        if let Some(i) = privatized.iter().position(|&v| v == 0.0) {
            return Err(Error::LogSingularity { index: i });
        }
    }
    Ok(privatized.iter().map(|&v| g.eval(v)).sum::<f64>() / privatized.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStatistics {
    pub l: [f64; 3],
    /// `√K |L_m - μ_m| / √v_mm`
    pub t: [f64; 3],
    /// Signed version of `t`.
    pub z: [f64; 3],
    pub t_max: f64,
    pub k: usize,
    pub n: usize,
    pub d: usize,
}

/// Standardizes `L` against a moment table.
pub fn standardize(l: [f64; 3], table: &MomentTable, k: usize, n: usize, d: usize) -> Result<TestStatistics> {
    let mut z = [0.0; 3];
    for m in 0..3 {
        let v = table.v[(m, m)];
        if !(v > 0.0) {
            return Err(Error::Degenerate(format!("variance of statistic {} is {v}", m + 1)));
        }
        z[m] = (k as f64).sqrt() * (l[m] - table.mu[m]) / v.sqrt();
    }
    let t = z.map(f64::abs);
    let t_max = t.iter().copied().fold(0.0, f64::max);
    Ok(TestStatistics { l, t, z, t_max, k, n, d })
}

const CHUNK: usize = 4096;

/// Draws of `max_m |Y_m|` with `Y ~ N₃(0, R)`.
///
/// Draws are produced in chunks of 4096, chunk `c` from the stream
/// `(seed, CRITICAL, c)`, so the output does not depend on the number of
/// worker threads.
pub fn max_abs_draws(r: &Matrix3<f64>, samples: usize, seed: u64) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::Input("need at least one Monte Carlo sample".into()));
    }
    if (0..3).any(|i| (r[(i, i)] - 1.0).abs() > 1e-8) || (r - r.transpose()).amax() > 1e-12 {
        return Err(Error::Degenerate("correlation matrix must be symmetric with unit diagonal".into()));
    }
    let l = match Cholesky::new(*r) {
        Some(c) => c.l(),
        None => Cholesky::new(r + Matrix3::identity() * 1e-12)
            .ok_or_else(|| Error::Degenerate("correlation matrix is not positive semidefinite".into()))?
            .l(),
    };
    let chunks = samples.div_ceil(CHUNK);
    let draws: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = seed::rng_for(seed, stream::CRITICAL, c as u64);
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len)
                .map(|_| {
                    let e = Vector3::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    );
                    (l * e).amax()
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok(draws)
}

/// Type-7 sample quantile. Reorders `draws`.
fn quantile_type7(draws: &mut [f64], p: f64) -> f64 {
    let n = draws.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let (_, &mut a, upper) = draws.select_nth_unstable_by(lo, f64::total_cmp);
    if lo + 1 >= n {
        return a;
    }
    let b = upper.iter().copied().fold(f64::INFINITY, f64::min);
    a + (h - lo as f64) * (b - a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub z_alpha: f64,
    pub alpha: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub r_used: Matrix3<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Monte Carlo `(1 - α)` quantile of `max |Y_m|`.
pub fn critical_value(r: &Matrix3<f64>, alpha: f64, mc_samples: usize, seed: u64) -> Result<CriticalValue> {
    check_alpha(alpha)?;
    let mut draws = max_abs_draws(r, mc_samples, seed)?;
    Ok(CriticalValue { z_alpha: quantile_type7(&mut draws, 1.0 - alpha), alpha, mc_samples, seed, r_used: *r })
}

/// Monte Carlo `P(max |Y_m| > t_obs)`, from the same draws as
/// [`critical_value`] with the same seed.
pub fn p_value_max(r: &Matrix3<f64>, t_obs: f64, mc_samples: usize, seed: u64) -> Result<f64> {
    if !(t_obs >= 0.0) {
        return Err(Error::Input(format!("observed statistic must be nonnegative, got {t_obs}")));
    }
    let draws = max_abs_draws(r, mc_samples, seed)?;
    Ok(survival(&draws, t_obs))
}

fn survival(draws: &[f64], t_obs: f64) -> f64 {
    draws.iter().filter(|&&v| v > t_obs).count() as f64 / draws.len() as f64
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Two-sided normal p-value `2(1 - Φ(t))`.
pub fn marginal_p_value(t: f64) -> f64 {
    (2.0 * std_normal().sf(t)).min(1.0)
}

/// `Φ⁻¹(1 - α/2)`, the per-statistic threshold.
pub fn marginal_critical_value(alpha: f64) -> f64 {
    std_normal().inverse_cdf(1.0 - 0.5 * alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Accept,
}

impl Decision {
    pub fn from_reject(reject: bool) -> Self {
        if reject {
            Decision::Reject
        } else {
            Decision::Accept
        }
    }

    pub fn is_reject(self) -> bool {
        self == Decision::Reject
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub privacy: PrivacyParams,
    pub alpha: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub source: Source,
    pub centered: bool,
    pub nodes: usize,
}

impl TestConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        Ok(Self {
            privacy: PrivacyParams::new(epsilon)?,
            alpha: 0.05,
            mc_samples: 1_000_000,
            seed: 0,
            source: Source::Covariance,
            centered: false,
            nodes: DEFAULT_NODES,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.privacy.validated()?;
        check_alpha(self.alpha)?;
        if self.mc_samples == 0 {
            return Err(Error::Input("mc-samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistics: TestStatistics,
    pub critical: CriticalValue,
    pub p_max: f64,
    /// `2(1 - Φ(T_m))` for each statistic.
    pub p_marginal: [f64; 3],
    /// How `p_marginal` is computed.
    pub p_marginal_convention: String,
    /// `T_m > Φ⁻¹(1 - α/2)`.
    pub marginal_reject: [bool; 3],
    pub decision: Decision,
    pub moment_table: MomentTable,
    pub privatized: PrivatizedSpectrum,
    pub source: Source,
    pub centered: bool,
    pub config: TestConfig,
    pub version: String,
}

/// Runs the full test on a data matrix.
pub fn run_test(x: &DataMatrix, config: &TestConfig) -> Result<TestReport> {
    config.validate()?;
    let spectrum = match config.source {
        Source::Covariance => covariance_spectrum(x, config.centered),
        Source::Correlation => correlation_spectrum(x)?,
    };
    run_test_spectrum(&spectrum, config, None)
}

/// Runs the test from precomputed eigenvalues. With a cache, the null moment
/// table is looked up at the noise scale rounded to 1e-6.
pub fn run_test_spectrum(
    spectrum: &SpectrumResult,
    config: &TestConfig,
    cache: Option<&MomentCache>,
) -> Result<TestReport> {
    config.validate()?;
    let privatized = privatize_spectrum(spectrum, &config.privacy, config.seed)?;
    let y = spectrum.d as f64 / spectrum.n as f64;
    let table = match cache {
        Some(c) => c.null_table(y, privatized.noise_scale, config.nodes)?,
        None => {
            let mp = MarchenkoPastur::new(y)?;
            crate::moments::moment_table(&mp, NoiseLaw::new(privatized.noise_scale)?, Kappa::Null, config.nodes)?
        }
    };
    decide(privatized, table, config, spectrum.source, spectrum.centered)
}

fn decide(
    privatized: PrivatizedSpectrum,
    table: MomentTable,
    config: &TestConfig,
    source: Source,
    centered: bool,
) -> Result<TestReport> {
    let mut l = [0.0; 3];
    for g in LossFunction::ALL {
        l[g.index()] = compute_l(&privatized.privatized, g)?;
    }
    let statistics = standardize(l, &table, privatized.k, privatized.n, privatized.d)?;
    let mut draws = max_abs_draws(&table.r, config.mc_samples, config.seed)?;
    let p_max = survival(&draws, statistics.t_max);
    let z_alpha = quantile_type7(&mut draws, 1.0 - config.alpha);
    let critical = CriticalValue {
        z_alpha,
        alpha: config.alpha,
        mc_samples: config.mc_samples,
        seed: config.seed,
        r_used: table.r,
    };
    let threshold = marginal_critical_value(config.alpha);
    Ok(TestReport {
        p_marginal: statistics.t.map(marginal_p_value),
        p_marginal_convention: "two-sided normal: 2(1 - Phi(T_m))".into(),
        marginal_reject: statistics.t.map(|t| t > threshold),
        decision: Decision::from_reject(statistics.t_max > z_alpha),
        statistics,
        critical,
        p_max,
        moment_table: table,
        privatized,
        source,
        centered,
        config: *config,
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

impl TestReport {
    /// Recomputes the statistics and decision from the stored privatized
    /// eigenvalues, moment table and critical value, and checks that they
    /// agree with the stored values.
    pub fn verify(&self) -> Result<Decision> {
        let p = &self.privatized;
        if p.privatized.len() != p.k {
            return Err(Error::Input("stored spectrum length does not match K".into()));
        }
        let mut l = [0.0; 3];
        for g in LossFunction::ALL {
            l[g.index()] = compute_l(&p.privatized, g)?;
        }
        let stats = standardize(l, &self.moment_table, p.k, p.n, p.d)?;
        for m in 0..3 {
            let tol = 1e-12 * (1.0 + stats.t[m].abs());
            if (stats.t[m] - self.statistics.t[m]).abs() > tol {
                return Err(Error::Input(format!(
                    "stored T{} = {} does not match recomputed {}",
                    m + 1,
                    self.statistics.t[m],
                    stats.t[m]
                )));
            }
        }
        let decision = Decision::from_reject(stats.t_max > self.critical.z_alpha);
        if decision != self.decision {
            return Err(Error::Input(format!(
                "stored decision {:?} does not match recomputed {:?}",
                self.decision, decision
            )));
        }
        Ok(decision)
    }
}

/// `n Σ (λᵢ - log λᵢ - 1)`, for `d < n`.
pub fn lr_statistic(spectrum: &SpectrumResult) -> Result<f64> {
    if spectrum.d >= spectrum.n {
        return Err(Error::Domain(format!("likelihood ratio needs d < n (d = {}, n = {})", spectrum.d, spectrum.n)));
    }
    Ok(spectrum.n as f64 * loss_sum(&spectrum.eigenvalues)?)
}

/// `Σ {λᵢ - log λᵢ - 1 - F}` with `F = 1 + (1 - y) log(1 - y) / y`, `y = d/n < 1`.
pub fn clr_statistic(spectrum: &SpectrumResult) -> Result<f64> {
    let y = spectrum.d as f64 / spectrum.n as f64;
    if y >= 1.0 {
        return Err(Error::Domain(format!("corrected likelihood ratio needs d/n < 1, got {y}")));
    }
    let f = clr_centering(y);
    Ok(loss_sum(&spectrum.eigenvalues)? - spectrum.eigenvalues.len() as f64 * f)
}

/// `1 + (1 - y) log(1 - y) / y`, tending to 0 as `y → 0`.
pub fn clr_centering(y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    1.0 + (1.0 - y) * (-y).ln_1p() / y
}

fn loss_sum(eigenvalues: &[f64]) -> Result<f64> {
    if let Some(i) = eigenvalues.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::LogSingularity { index: i });
    }
    Ok(eigenvalues.iter().map(|&v| v - v.ln() - 1.0).sum())
}

/// JSON formatter writing every finite float with 17 significant digits and
/// non-finite ones as `null`.
#[derive(Debug, Default)]
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` as JSON with 17 significant digits per number.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("JSON output is UTF-8"))
}
