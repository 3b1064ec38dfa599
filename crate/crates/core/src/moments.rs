//! Asymptotic mean and covariance of the privatized linear spectral
//! statistics.
//!
//! For a loss `g` and Laplace noise `ℓ` with scale `b`,
//! `b_g(t) = E g(t + ℓ)` and `b_{g,h}(t) = E g(t + ℓ) h(t + ℓ)`. The limiting
//! mean and covariance of the three statistics are
//!
//! ```text
//! μ(g)    = (1 ∨ y) ∫_{t>0} b_g(t) dF(t)
//! v(g, h) = (1 ∨ y) ∫_{t>0} {b_{g,h}(t) - b_g(t) b_h(t)} dF(t)
//! ```

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{tanh_sinh, GaussLegendre, Tolerance};
use crate::rmt::SpectralDistribution;

/// The three losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFunction {
    /// `|x| - log|x| - 1`
    G1,
    /// `(x - 1)²`
    G2,
    /// `|x - 1|`
    G3,
}

impl LossFunction {
    pub const ALL: [LossFunction; 3] = [LossFunction::G1, LossFunction::G2, LossFunction::G3];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            LossFunction::G1 => x.abs() - x.abs().ln() - 1.0,
            LossFunction::G2 => (x - 1.0) * (x - 1.0),
            LossFunction::G3 => (x - 1.0).abs(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Centered Laplace noise with scale `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLaw {
    pub scale: f64,
}

impl NoiseLaw {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Input(format!("noise scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }
}

const TRUNCATION: f64 = 60.0;
const STEPS: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
const INNER_TOL: Tolerance = Tolerance::new(1e-13, 1e-14);

fn panel_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24))
}

/// `E h(t + ℓ)` for a vector-valued `h` that may have a logarithmic
/// singularity at 0 and kinks at 0, 1.
///
/// The integral `∫ h(u) e^{-|u-t|/b} / (2b) du` is truncated to
/// `t ± 60b` and split at 0, 1, `t` and `t ± {½, 1, 2, …, 32} b`. Panels touching
/// or close to the origin use tanh-sinh, the rest a 24-point Gauss–Legendre
/// rule.
pub fn laplace_expectation<const N: usize, H>(t: f64, noise: NoiseLaw, h: H) -> Result<[f64; N]>
where
    H: Fn(f64) -> [f64; N],
{
    let b = noise.scale;
    let lo = t - TRUNCATION * b;
    let hi = t + TRUNCATION * b;
    let mut cuts: Vec<f64> = Vec::with_capacity(2 * STEPS.len() + 5);
    cuts.extend([lo, hi, t]);
    for s in STEPS {
        cuts.push(t - s * b);
        cuts.push(t + s * b);
    }
    for special in [0.0, 1.0] {
        if special > lo && special < hi {
            cuts.push(special);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let weight = |u: f64| (-(u - t).abs() / b).exp() / (2.0 * b);
    let gl = panel_rule();
    let mut acc = [0.0; N];
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let width = q - p;
        let dist = if p >= 0.0 {
            p
        } else if q <= 0.0 {
            -q
        } else {
            0.0
        };
        let part = if dist < width {
            tanh_sinh(
                p,
                q,
                |u, _, _| {
                    let v = h(u);
                    let wt = weight(u);
                    v.map(|x| x * wt)
                },
                INNER_TOL,
            )?
        } else {
            gl.integrate_vec(p, q, |u| {
                let v = h(u);
                let wt = weight(u);
                v.map(|x| x * wt)
            })
        };
        for k in 0..N {
            acc[k] += part[k];
        }
    }
    Ok(acc)
}

/// `b_g(t)` in closed form for `g2`, `g3`.
fn b_g_closed(g: LossFunction, t: f64, b: f64) -> Option<f64> {
    let s = t - 1.0;
    match g {
        LossFunction::G1 => None,
        LossFunction::G2 => Some(s * s + 2.0 * b * b),
        LossFunction::G3 => Some(s.abs() + b * (-s.abs() / b).exp()),
    }
}

/// `E g(t + ℓ)`.
pub fn b_g(g: LossFunction, t: f64, noise: NoiseLaw) -> Result<f64> {
    match b_g_closed(g, t, noise.scale) {
        Some(v) => Ok(v),
        None => b_g_quadrature(g, t, noise),
    }
}

/// `E g(t + ℓ)` by quadrature, whatever the loss.
pub fn b_g_quadrature(g: LossFunction, t: f64, noise: NoiseLaw) -> Result<f64> {
    laplace_expectation(t, noise, |u| [g.eval(u)]).map(|v| v[0])
}

/// `E g(t + ℓ) h(t + ℓ)`.
pub fn b_gg(g: LossFunction, h: LossFunction, t: f64, noise: NoiseLaw) -> Result<f64> {
    use LossFunction::*;
    let b = noise.scale;
    let s = t - 1.0;
    match (g, h) {
        (G2, G2) => Ok(s.powi(4) + 12.0 * s * s * b * b + 24.0 * b.powi(4)),
        // g3² = g2
        (G3, G3) => b_g(G2, t, noise),
        _ => b_gg_quadrature(g, h, t, noise),
    }
}

/// `E g(t + ℓ) h(t + ℓ)` by quadrature.
pub fn b_gg_quadrature(g: LossFunction, h: LossFunction, t: f64, noise: NoiseLaw) -> Result<f64> {
    laplace_expectation(t, noise, |u| [g.eval(u) * h.eval(u)]).map(|v| v[0])
}

/// Pointwise integrand of the moment table: `[b_g1, b_g2, b_g3]` followed by
/// the upper triangle of `b_{gm,gs} - b_gm b_gs` in row order.
pub fn pointwise_moments(t: f64, noise: NoiseLaw) -> Result<[f64; 9]> {
    let b = noise.scale;
    let g1 = LossFunction::G1;
    let g2 = LossFunction::G2;
    let g3 = LossFunction::G3;
    let [e1, e11, e12, e13, e23] = laplace_expectation(t, noise, |u| {
        let a = g1.eval(u);
        let c = g2.eval(u);
        let d = g3.eval(u);
        [a, a * a, a * c, a * d, c * d]
    })?;
    let e2 = b_g_closed(g2, t, b).unwrap_or_default();
    let e3 = b_g_closed(g3, t, b).unwrap_or_default();
    let s = t - 1.0;
    // Var g2(t + ℓ) = E(s + ℓ)⁴ - (s² + 2b²)² = 8 s² b² + 20 b⁴, written
    // directly to avoid cancellation.
    let v22 = 8.0 * s * s * b * b + 20.0 * b.powi(4);
    let v33 = e2 - e3 * e3;
    Ok([e1, e2, e3, e11 - e1 * e1, e12 - e1 * e2, e13 - e1 * e3, v22, e23 - e2 * e3, v33])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kappa {
    Null,
    Alternative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub mu: Vector3<f64>,
    pub v: Matrix3<f64>,
    /// Diagonal of `Γ = diag(√v₁₁, √v₂₂, √v₃₃)`.
    pub gamma: Vector3<f64>,
    /// `Γ⁻¹ V Γ⁻¹`.
    pub r: Matrix3<f64>,
    pub kappa: Kappa,
    pub b: f64,
    pub y: f64,
    /// Outer nodes used by the accepted value.
    pub nodes: usize,
}

/// Default number of outer Chebyshev angles.
pub const DEFAULT_NODES: usize = 512;
const MAX_NODES: usize = 1 << 15;
const OUTER_TOL: f64 = 1e-9;

/// Computes `μ`, `V`, `Γ` and `R` for the given law and noise. The outer
/// node count starts at `nodes` and doubles until two successive values of
/// every entry agree to 1e-9 (relative to the entry once it exceeds one).
pub fn moment_table<L: SpectralDistribution>(
    law: &L,
    noise: NoiseLaw,
    kappa: Kappa,
    nodes: usize,
) -> Result<MomentTable> {
    let y = law.aspect_ratio();
    let factor = y.max(1.0);
    let eval = |n: usize| law.integrate(|t| pointwise_moments(t, noise), n);
    let mut n = nodes.max(8);
    let mut prev = eval(n)?;
    loop {
        let next_n = 2 * n;
        let cur = eval(next_n)?;
        let diff = prev.iter().zip(&cur).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max);
        if diff < OUTER_TOL {
            // Keep the coarser value so the reported node count is the one
            // that passed the check.
            return assemble(prev, factor, noise.scale, y, kappa, n);
        }
        if next_n >= MAX_NODES {
            return Err(Error::Quadrature { achieved: diff });
        }
        n = next_n;
        prev = cur;
    }
}

fn assemble(raw: [f64; 9], factor: f64, b: f64, y: f64, kappa: Kappa, nodes: usize) -> Result<MomentTable> {
    let [m1, m2, m3, v11, v12, v13, v22, v23, v33] = raw.map(|x| x * factor);
    let mu = Vector3::new(m1, m2, m3);
    let v = Matrix3::new(v11, v12, v13, v12, v22, v23, v13, v23, v33);
    let diag = Vector3::new(v11, v22, v33);
    if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::Degenerate(format!("variance of statistic {} is {}", i + 1, diag[i])));
    }
    let gamma = diag.map(f64::sqrt);
    let mut r = Matrix3::from_fn(|i, j| v[(i, j)] / (gamma[i] * gamma[j]));
    for i in 0..3 {
        r[(i, i)] = 1.0;
    }
    let smallest = SymmetricEigen::new(r).eigenvalues.min();
    if !(smallest > 1e-8) {
        return Err(Error::Degenerate(format!(
            "limiting correlation matrix is singular (smallest eigenvalue {smallest:e})"
        )));
    }
    Ok(MomentTable { mu, v, gamma, r, kappa, b, y, nodes })
}

/// Null moment tables keyed by `(y, b rounded to 1e-6, nodes)`.
///
/// The table is computed at the rounded scale, so a lookup returns the same
/// value no matter which caller populated the entry.
#[derive(Debug, Default)]
pub struct MomentCache {
    tables: Mutex<HashMap<(u64, i64, usize), MomentTable>>,
}

impl MomentCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rounded_scale(b: f64) -> f64 {
        (b * 1e6).round() / 1e6
    }

    pub fn null_table(&self, y: f64, b: f64, nodes: usize) -> Result<MomentTable> {
        let key_b = (b * 1e6).round() as i64;
        let key = (y.to_bits(), key_b, nodes);
        if let Some(t) = self.tables.lock().expect("moment cache poisoned").get(&key) {
            return Ok(t.clone());
        }
        let mp = crate::rmt::MarchenkoPastur::new(y)?;
        let table = moment_table(&mp, NoiseLaw::new(Self::rounded_scale(b))?, Kappa::Null, nodes)?;
        self.tables.lock().expect("moment cache poisoned").insert(key, table.clone());
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.tables.lock().expect("moment cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
