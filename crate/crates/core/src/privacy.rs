//! Sensitivity bounds and the two-stage Laplace release of sample eigenvalues.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::spectra::{covariance_spectrum, DataMatrix, SpectrumResult};

/// Multiplier in the trace-ratio sensitivity bound `2.01 σ² γ d / n`.
pub const SENSITIVITY_FACTOR: f64 = 2.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    /// Preset upper bound on `tr(Σ)/d` used for the first release.
    pub gamma_tilde: f64,
    /// Sub-Gaussian parameter of the data.
    pub sigma: f64,
    /// Tail exponent, only used for the reported failure probability.
    pub r: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        Self { epsilon, ..Self::default() }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Input(format!("epsilon must be positive and finite, got {}", self.epsilon)));
        }
        if !(self.gamma_tilde.is_finite() && self.gamma_tilde >= 1.0) {
            return Err(Error::Input(format!("gamma-tilde must be at least 1, got {}", self.gamma_tilde)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Input(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.r > 0.0 && self.r < 0.5) {
            return Err(Error::Input(format!("r must lie in (0, 1/2), got {}", self.r)));
        }
        Ok(self)
    }

    /// Laplace scale `2.01 σ² γ d / (n ε)`.
    pub fn noise_scale(&self, gamma: f64, n: usize, d: usize) -> f64 {
        SENSITIVITY_FACTOR * self.sigma * self.sigma * gamma * d as f64 / (n as f64 * self.epsilon)
    }
}

impl Default for PrivacyParams {
    fn default() -> Self {
        Self { epsilon: 1.0, gamma_tilde: 2.0, sigma: 1.0, r: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Depends on `tr Σ`, `tr Σ²` and `‖Σ‖` and a deviation level `t`.
    TraceTail,
    /// Depends only on `γ = tr(Σ)/d`.
    TraceRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBound {
    pub value: f64,
    pub failure_probability: f64,
    pub kind: BoundKind,
}

/// `σ² {2 tr/n + 4 √(tr₂) √(t/n) + 4 ‖Σ‖ t}`, failing with probability at
/// most `2 e^{-n t}`.
pub fn trace_tail_bound(
    trace: f64,
    trace_sq: f64,
    opnorm: f64,
    sigma: f64,
    n: usize,
    t: f64,
) -> Result<SensitivityBound> {
    for (name, v) in [("trace", trace), ("trace_sq", trace_sq), ("opnorm", opnorm), ("sigma", sigma), ("t", t)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Input(format!("{name} must be positive, got {v}")));
        }
    }
    if n == 0 {
        return Err(Error::Input("n must be positive".into()));
    }
    let nf = n as f64;
    let value = sigma * sigma * (2.0 * trace / nf + 4.0 * trace_sq.sqrt() * (t / nf).sqrt() + 4.0 * opnorm * t);
    Ok(SensitivityBound { value, failure_probability: (2.0 * (-nf * t).exp()).min(1.0), kind: BoundKind::TraceTail })
}

/// `2.01 σ² γ d / n`, failing with probability at most `2 exp(-n^{1-2r})`.
pub fn trace_ratio_bound(gamma: f64, sigma: f64, d: usize, n: usize, r: f64) -> Result<SensitivityBound> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::Input(format!("gamma must be at least 1, got {gamma}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Input(format!("sigma must be positive, got {sigma}")));
    }
    if n == 0 || d == 0 {
        return Err(Error::Input("n and d must be positive".into()));
    }
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::Input(format!("r must lie in (0, 1/2), got {r}")));
    }
    let nf = n as f64;
    Ok(SensitivityBound {
        value: SENSITIVITY_FACTOR * sigma * sigma * gamma * d as f64 / nf,
        failure_probability: (2.0 * (-nf.powf(1.0 - 2.0 * r)).exp()).min(1.0),
        kind: BoundKind::TraceRatio,
    })
}

/// One centered Laplace draw with the given scale, by inversion.
pub fn laplace_draw<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        if u != -0.5 {
            return -scale * u.signum() * (-2.0 * u.abs()).ln_1p();
        }
    }
}

/// `count` i.i.d. centered Laplace draws.
pub fn laplace_noise<R: Rng + ?Sized>(scale: f64, count: usize, rng: &mut R) -> Vec<f64> {
    assert!(scale > 0.0, "Laplace scale must be positive");
    (0..count).map(|_| laplace_draw(scale, rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivatizedSpectrum {
    pub raw: Vec<f64>,
    pub stage1_noise: Vec<f64>,
    pub stage1_noisy: Vec<f64>,
    pub gamma_hat: f64,
    pub stage1_scale: f64,
    pub noise_scale: f64,
    pub stage2_noise: Vec<f64>,
    pub privatized: Vec<f64>,
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub d: usize,
}

/// Two-stage release.
///
/// 1. `λ*ᵢ = λᵢ + ℓ*ᵢ` with scale `2.01 σ² γ̃ d / (nε)`.
/// 2. `γ̂ = |Σ λ*ᵢ| / d`.
/// 3. `λ̃ᵢ = λᵢ + ℓᵢ` with fresh noise at scale `2.01 σ² γ̂ d / (nε)`.
///
/// Both noise vectors come from the stream `(seed, NOISE, 0)`, stage one
/// first.
pub fn privatize_spectrum(spectrum: &SpectrumResult, params: &PrivacyParams, seed: u64) -> Result<PrivatizedSpectrum> {
    let params = params.validated()?;
    let (n, d) = (spectrum.n, spectrum.d);
    let k = spectrum.k();
    if k != n.min(d) || k == 0 {
        return Err(Error::Input(format!("spectrum has {k} values, expected min(d, n) = {}", n.min(d))));
    }
    let mut rng = seed::rng_for(seed, stream::NOISE, 0);
    let raw = spectrum.eigenvalues.clone();

    let stage1_scale = params.noise_scale(params.gamma_tilde, n, d);
    let stage1_noise = laplace_noise(stage1_scale, k, &mut rng);
    let stage1_noisy: Vec<f64> = raw.iter().zip(&stage1_noise).map(|(l, e)| l + e).collect();
    let gamma_hat = stage1_noisy.iter().sum::<f64>().abs() / d as f64;
    if !(gamma_hat > 0.0) {
        return Err(Error::TraceCollapsed);
    }

    let noise_scale = params.noise_scale(gamma_hat, n, d);
    if !(noise_scale > 0.0 && noise_scale.is_finite()) {
        return Err(Error::TraceCollapsed);
    }
    let stage2_noise = laplace_noise(noise_scale, k, &mut rng);
    let privatized = raw.iter().zip(&stage2_noise).map(|(l, e)| l + e).collect();

    Ok(PrivatizedSpectrum {
        raw,
        stage1_noise,
        stage1_noisy,
        gamma_hat,
        stage1_scale,
        noise_scale,
        stage2_noise,
        privatized,
        seed,
        k,
        n,
        d,
    })
}

/// `‖Λ(XᵀX/n) − Λ(X̃ᵀX̃/n)‖₁` over all `d` eigenvalues (zero padded) for two
/// data sets differing in exactly one row.
pub fn empirical_sensitivity(x: &DataMatrix, x_tilde: &DataMatrix) -> Result<f64> {
    if x.n() != x_tilde.n() || x.d() != x_tilde.d() {
        return Err(Error::Input("neighbouring data sets must have the same shape".into()));
    }
    let differing = (0..x.n()).filter(|&i| x.values().row(i) != x_tilde.values().row(i)).count();
    if differing > 1 {
        return Err(Error::Input(format!("data sets differ in {differing} rows, not neighbours")));
    }
    let d = x.d();
    let padded = |s: SpectrumResult| {
        let mut v = s.eigenvalues;
        v.resize(d, 0.0);
        v
    };
    let a = padded(covariance_spectrum(x, false));
    let b = padded(covariance_spectrum(x_tilde, false));
    Ok(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum())
}
