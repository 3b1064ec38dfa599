//! Quadrature rules.
//!
//! * double-exponential (tanh-sinh) panels for integrands with endpoint
//!   singularities, evaluated with endpoint offsets computed exactly so that
//!   `log|u|` at an endpoint `u = 0` never loses precision;
//! * Gauss–Legendre rules for smooth integrands;
//! * the Chebyshev (cosine) substitution used for integrals against densities
//!   with square-root edges.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use crate::error::{Error, Result};

const MAX_LEVEL: usize = 9;
const T_MAX: f64 = 3.5;

/// One tanh-sinh node on the reference interval: the fractional distance of
/// the node from the nearer endpoint and its weight (including the step).
#[derive(Clone, Copy)]
struct DeNode {
    frac: f64,
    weight: f64,
    centre: bool,
}

fn de_levels() -> &'static Vec<Vec<DeNode>> {
    static LEVELS: OnceLock<Vec<Vec<DeNode>>> = OnceLock::new();
    LEVELS.get_or_init(|| {
        (0..=MAX_LEVEL)
            .map(|level| {
                let h = 0.5f64.powi(level as i32);
                // level 0 holds every integer multiple of h = 1; finer levels
                // only add the odd multiples of their own step.
                let (start, step) = if level == 0 { (0.0, 1.0) } else { (h, 2.0 * h) };
                let mut nodes = Vec::new();
                let mut t = start;
                while t <= T_MAX {
                    let s = FRAC_PI_2 * t.sinh();
                    let frac = 1.0 / (1.0 + (2.0 * s).exp());
                    let cosh_s = s.cosh();
                    let weight = FRAC_PI_2 * t.cosh() / (cosh_s * cosh_s);
                    nodes.push(DeNode { frac, weight, centre: t == 0.0 });
                    t += step;
                }
                nodes
            })
            .collect()
    })
}

/// Termination rule for adaptive rules: stop when the change between
/// successive refinements is at most `abs + rel * |value|`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-12, 1e-13)
    }
}

/// Tanh-sinh quadrature of a vector-valued integrand over `[a, c]`.
///
/// The integrand receives `(u, offset, from_left)`: the abscissa, its distance
/// to the nearer endpoint (exact, not computed as a difference), and which
/// endpoint that is. Integrands with a singularity at an endpoint should use
/// the offset rather than `u - a`.
pub fn tanh_sinh<const N: usize, F>(a: f64, c: f64, mut f: F, tol: Tolerance) -> Result<[f64; N]>
where
    F: FnMut(f64, f64, bool) -> [f64; N],
{
    let len = c - a;
    if len == 0.0 {
        return Ok([0.0; N]);
    }
    let levels = de_levels();
    let half = 0.5 * len;
    let mut sum = [0.0; N];
    let mut eval = |node: &DeNode, sum: &mut [f64; N]| {
        if node.centre {
            let v = f(a + half, half, true);
            for k in 0..N {
                sum[k] += node.weight * v[k];
            }
        } else {
            let off = len * node.frac;
            let l = f(a + off, off, true);
            let r = f(c - off, off, false);
            for k in 0..N {
                sum[k] += node.weight * (l[k] + r[k]);
            }
        }
    };
    for node in &levels[0] {
        eval(node, &mut sum);
    }
    let mut prev = sum.map(|s| s * half);
    let mut achieved = f64::INFINITY;
    for (level, nodes) in levels.iter().enumerate().skip(1) {
        for node in nodes {
            eval(node, &mut sum);
        }
        let h = 0.5f64.powi(level as i32);
        let cur = sum.map(|s| s * half * h);
        let mut ok = true;
        achieved = 0.0;
        for k in 0..N {
            let diff = (cur[k] - prev[k]).abs();
            achieved = achieved.max(diff);
            if !(diff <= tol.abs + tol.rel * cur[k].abs()) {
                ok = false;
            }
        }
        // Require at least level 3 so that a lucky agreement of two coarse
        // estimates cannot terminate early.
        if ok && level >= 3 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature { achieved })
}

/// Scalar convenience wrapper around [`tanh_sinh`].
pub fn tanh_sinh_scalar<F>(a: f64, c: f64, mut f: F, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    tanh_sinh(a, c, |u, _, _| [f(u)], tol).map(|v| v[0])
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
    }

    /// Vector-valued version of [`integrate`](Self::integrate).
    pub fn integrate_vec<const N: usize, F: FnMut(f64) -> [f64; N]>(&self, a: f64, b: f64, mut f: F) -> [f64; N] {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = [0.0; N];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            for k in 0..N {
                acc[k] += w * v[k];
            }
        }
        acc.map(|s| s * half)
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Midpoint nodes `θ_k = (2k - 1)π / 2N` of the Gauss–Chebyshev rule, viewed
/// in the angle variable.
///
/// With `t = c - r cos θ` an integral `∫ φ(t) √((t-a)(b-t)) w(t) dt` over
/// `[a, b]` becomes `∫_0^π φ r² sin²θ w dθ`, whose integrand has no endpoint
/// singularity; the equal-weight rule `π/N Σ G(θ_k)` then converges
/// spectrally.
pub fn chebyshev_angles(n: usize) -> impl Iterator<Item = f64> {
    let nf = n as f64;
    (1..=n).map(move |k| (2.0 * k as f64 - 1.0) * PI / (2.0 * nf))
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tanh_sinh_handles_log_endpoint() {
        // ∫_0^1 ln u du = -1
        let v =
            tanh_sinh(0.0, 1.0, |_, off, left| [if left { off.ln() } else { (1.0 - off).ln() }], Tolerance::default())
                .unwrap();
        assert_relative_eq!(v[0], -1.0, epsilon = 1e-13);
        // ∫_0^1 ln² u du = 2
        let v = tanh_sinh_scalar(0.0, 1.0, |u| u.ln().powi(2), Tolerance::default()).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-11);
    }

    #[test]
    fn tanh_sinh_polynomial_exactish() {
        let v = tanh_sinh_scalar(-2.0, 3.0, |u| u * u * u - u, Tolerance::default()).unwrap();
        let exact = (81.0 / 4.0 - 9.0 / 2.0) - (16.0 / 4.0 - 4.0 / 2.0);
        assert_relative_eq!(v, exact, epsilon = 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert_relative_eq!(v, 2f64.powi(16) / 16.0, max_relative = 1e-13);
        assert_relative_eq!(gl.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn chebyshev_rule_semicircle() {
        // ∫_{-1}^{1} √(1-t²) dt = π/2 ; with t = -cos θ the integrand is sin²θ.
        let n = 64;
        let s: f64 = chebyshev_angles(n).map(|th| th.sin().powi(2)).sum::<f64>() * PI / n as f64;
        assert_relative_eq!(s, FRAC_PI_2, epsilon = 1e-14);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = compensated_sum([1e16, 1.0, -1e16, 1.0]);
        assert_eq!(v, 2.0);
    }
}
