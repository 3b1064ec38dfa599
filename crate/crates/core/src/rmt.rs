//! Limiting spectral laws of sample covariance matrices.
//!
//! [`MarchenkoPastur`] is the closed-form null law. [`SpectralLaw`] is the
//! generalized law for an arbitrary discrete population measure, obtained by
//! solving the Stieltjes fixed-point equation
//!
//! ```text
//! m(z) = ∫ dQ(t) / (t (1 - y - y z m(z)) - z),   z ∈ C⁺
//! ```
//!
//! on a grid just above the real axis and inverting with
//! `f(x) = Im m(x + iν) / π`.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{chebyshev_angles, tanh_sinh_scalar, GaussLegendre, Tolerance};

type C64 = Complex<f64>;

/// Common interface of the limiting spectral distributions.
pub trait SpectralDistribution {
    /// Aspect ratio `d / n`.
    fn aspect_ratio(&self) -> f64;

    /// Probability of the atom at zero, `max(0, 1 - 1/y)`.
    fn zero_mass(&self) -> f64;

    /// Smallest positive point of the support.
    fn lower_edge(&self) -> f64;

    /// Right-continuous distribution function.
    fn cdf(&self, t: f64) -> f64;

    /// Inverse of [`cdf`](Self::cdf) on `(zero_mass, 1]`.
    fn quantile(&self, p: f64) -> Result<f64>;

    /// `∫_{t>0} φ(t) dF(t)` for a vector-valued `φ`, using `nodes` Chebyshev
    /// angles per support interval.
    fn integrate<const N: usize, F>(&self, f: F, nodes: usize) -> Result<[f64; N]>
    where
        F: FnMut(f64) -> Result<[f64; N]>;
}

/// The Marchenko–Pastur law with ratio index `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchenkoPastur {
    pub y: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub zero_mass: f64,
}

impl MarchenkoPastur {
    pub fn new(y: f64) -> Result<Self> {
        if !(y.is_finite() && y > 0.0) {
            return Err(Error::Input(format!("aspect ratio must be positive and finite, got {y}")));
        }
        let s = y.sqrt();
        Ok(Self {
            y,
            lambda_minus: (1.0 - s).powi(2),
            lambda_plus: (1.0 + s).powi(2),
            zero_mass: (1.0 - 1.0 / y).max(0.0),
        })
    }

    /// Mass of the absolutely continuous part, `min(1, 1/y)`.
    pub fn continuous_mass(&self) -> f64 {
        (1.0 / self.y).min(1.0)
    }

    fn centre_radius(&self) -> (f64, f64) {
        (0.5 * (self.lambda_plus + self.lambda_minus), 0.5 * (self.lambda_plus - self.lambda_minus))
    }

    /// Density of the continuous part. The atom at the origin is not included.
    pub fn density(&self, t: f64) -> f64 {
        if !(t > self.lambda_minus && t < self.lambda_plus) || t <= 0.0 {
            return 0.0;
        }
        ((t - self.lambda_minus) * (self.lambda_plus - t)).sqrt() / (2.0 * PI * self.y * t)
    }

    /// Abscissa `t(θ) = λ₋ + 2r sin²(θ/2)`, i.e. `c - r cos θ` written so
    /// that it stays accurate when `λ₋ = 0`.
    fn abscissa(&self, theta: f64) -> f64 {
        let (_, r) = self.centre_radius();
        let s = (0.5 * theta).sin();
        self.lambda_minus + 2.0 * r * s * s
    }

    /// The density pulled back to the angle variable, `f(t(θ)) dt/dθ`.
    fn angular_density(&self, theta: f64) -> f64 {
        let (_, r) = self.centre_radius();
        let t = self.abscissa(theta);
        let s = theta.sin();
        if t <= 0.0 {
            return 0.0;
        }
        r * r * s * s / (2.0 * PI * self.y * t)
    }

    fn angle_of(&self, t: f64) -> f64 {
        let (c, r) = self.centre_radius();
        ((c - t) / r).clamp(-1.0, 1.0).acos()
    }
}

impl SpectralDistribution for MarchenkoPastur {
    fn aspect_ratio(&self) -> f64 {
        self.y
    }

    fn zero_mass(&self) -> f64 {
        self.zero_mass
    }

    fn lower_edge(&self) -> f64 {
        self.lambda_minus
    }

    fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        if t <= self.lambda_minus {
            return self.zero_mass;
        }
        if t >= self.lambda_plus {
            return 1.0;
        }
        let theta = self.angle_of(t);
        let tol = Tolerance::new(1e-15, 1e-14);
        // The integrand is analytic in θ, so the quadrature cannot fail.
        let mass = tanh_sinh_scalar(0.0, theta, |th| self.angular_density(th), tol)
            .unwrap_or_else(|_| GaussLegendre::new(64).integrate(0.0, theta, |th| self.angular_density(th)));
        (self.zero_mass + mass).min(1.0)
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        if !(p <= 1.0) {
            return Err(Error::Input(format!("probability must lie in (0, 1], got {p}")));
        }
        if p <= self.zero_mass {
            return Err(Error::QuantileInAtom { p, zero_mass: self.zero_mass });
        }
        if p == 1.0 {
            return Ok(self.lambda_plus);
        }
        let mut lo = self.lambda_minus;
        let mut hi = self.lambda_plus;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn integrate<const N: usize, F>(&self, mut f: F, nodes: usize) -> Result<[f64; N]>
    where
        F: FnMut(f64) -> Result<[f64; N]>,
    {
        let mut acc = [0.0; N];
        for theta in chebyshev_angles(nodes) {
            let t = self.abscissa(theta);
            let w = self.angular_density(theta);
            let v = f(t)?;
            for k in 0..N {
                acc[k] += w * v[k];
            }
        }
        let scale = PI / nodes as f64;
        Ok(acc.map(|a| a * scale))
    }
}

/// A discrete probability measure on `(0, ∞)`: the limiting spectral
/// distribution of the population covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationMeasure {
    atoms: Vec<(f64, f64)>,
}

impl PopulationMeasure {
    /// Builds a measure from `(location, weight)` pairs.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Input("population measure has no atoms".into()));
        }
        for &(t, w) in &atoms {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Input(format!("atom location must be positive, got {t}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Input(format!("atom weight must be nonnegative, got {w}")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(Self { atoms })
    }

    pub fn point_mass(location: f64) -> Result<Self> {
        Self::new(vec![(location, 1.0)])
    }

    /// Empirical spectral distribution of a population covariance, with
    /// equal eigenvalues (to 1e-12 relative) merged into one atom.
    pub fn from_eigenvalues(eigenvalues: &[f64]) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Input("no eigenvalues".into()));
        }
        let mut sorted = eigenvalues.to_vec();
        sorted.sort_by(f64::total_cmp);
        let w = 1.0 / sorted.len() as f64;
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for t in sorted {
            match atoms.last_mut() {
                Some(last) if (t - last.0).abs() <= 1e-12 * t.abs().max(1.0) => last.1 += w,
                _ => atoms.push((t, w)),
            }
        }
        // Renormalize away the rounding in the accumulated weights.
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        atoms.iter_mut().for_each(|a| a.1 /= total);
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn max_location(&self) -> f64 {
        self.atoms.iter().map(|a| a.0).fold(0.0, f64::max)
    }

    /// The measure pushed forward by `t ↦ c t`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.atoms.iter().map(|&(t, w)| (c * t, w)).collect())
    }
}

/// Numerical knobs for [`solve_generalized_mp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Imaginary offset ν of the evaluation contour.
    pub nu: f64,
    /// Number of uniform grid abscissae when `grid` is not given.
    pub grid_points: usize,
    /// Explicit abscissae; overrides `grid_points`.
    pub grid: Option<Vec<f64>>,
    /// Weight kept on the previous iterate in the damped update.
    pub damping: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Support membership threshold relative to the grid's maximum density.
    pub support_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            nu: 1e-5,
            grid_points: 2001,
            grid: None,
            damping: 0.5,
            rel_tol: 1e-10,
            max_iter: 10_000,
            support_threshold: 1e-6,
        }
    }
}

/// A generalized Marchenko–Pastur law, tabulated on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralLaw {
    pub y: f64,
    pub population: PopulationMeasure,
    pub nu: f64,
    /// Disjoint, ordered support intervals `[lo, hi]`, all with `lo > 0`.
    pub support: Vec<(f64, f64)>,
    /// `(x, density)` at the grid abscissae, evaluated at `x + iν`.
    pub density_grid: Vec<(f64, f64)>,
    /// `(x, F(x))` at the grid abscissae.
    pub cdf_grid: Vec<(f64, f64)>,
    pub zero_mass: f64,
}

/// The fixed-point problem behind the generalized law.
///
/// For `y ≤ 1` the unknown is `m` itself. For `y > 1` the iteration on `m`
/// from `-1/z` is attracted to a root without the atom at zero, so the
/// unknown is the companion transform `m̲ = -(1 - y)/z + y m` of the `n × n`
/// matrix, with `m̲ = -1 / (z - y ∫ t/(1 + t m̲) dQ(t))`.
struct Stieltjes<'a> {
    q: &'a PopulationMeasure,
    y: f64,
    companion: bool,
}

impl<'a> Stieltjes<'a> {
    fn new(q: &'a PopulationMeasure, y: f64) -> Self {
        Self { q, y, companion: y > 1.0 }
    }

    /// The fixed-point map and its derivative in the working unknown.
    fn map(&self, z: C64, m: C64) -> (C64, C64) {
        let y = self.y;
        let mut f = C64::new(0.0, 0.0);
        let mut df = C64::new(0.0, 0.0);
        if self.companion {
            let mut s = C64::new(0.0, 0.0);
            let mut ds = C64::new(0.0, 0.0);
            for &(t, w) in &self.q.atoms {
                let inv = (m * t + 1.0).inv();
                s += inv * (w * t);
                ds += inv * inv * (w * t * t);
            }
            let d_inv = (z - s * y).inv();
            f = -d_inv;
            df = ds * y * d_inv * d_inv;
        } else {
            let inner = C64::new(1.0 - y, 0.0) - z * m * y;
            for &(t, w) in &self.q.atoms {
                let d = inner * t - z;
                let inv = d.inv();
                f += inv * w;
                df += inv * inv * (w * t * y) * z;
            }
        }
        (f, df)
    }

    /// Converts the working unknown to the Stieltjes transform of the law.
    fn to_m(&self, z: C64, v: C64) -> C64 {
        if self.companion {
            v / self.y - z.inv() * (1.0 - 1.0 / self.y)
        } else {
            v
        }
    }

    /// Damped fixed-point iteration from `m₀ = -1/z`.
    fn damped(&self, z: C64, damping: f64, rel_tol: f64, max_iter: usize) -> (C64, bool) {
        let mut m = -z.inv();
        for _ in 0..max_iter {
            let (f, _) = self.map(z, m);
            let next = m * damping + f * (1.0 - damping);
            let done = (next - m).norm() <= rel_tol * next.norm();
            m = next;
            if done {
                return (m, true);
            }
        }
        (m, false)
    }

    /// Newton's method on `m - F(m) = 0`.
    fn newton(&self, z: C64, mut m: C64) -> Option<C64> {
        for _ in 0..100 {
            let (f, df) = self.map(z, m);
            let denom = C64::new(1.0, 0.0) - df;
            if denom.norm() == 0.0 {
                return None;
            }
            let step = (m - f) / denom;
            m -= step;
            if !m.re.is_finite() || !m.im.is_finite() {
                return None;
            }
            if step.norm() <= 1e-14 * m.norm().max(1e-300) {
                return Some(m);
            }
        }
        None
    }

    /// `m(z)`, or `None` if neither the damped iteration nor Newton's method
    /// reaches a root in the upper half plane.
    fn solve(&self, z: C64, opts: &SolverOptions) -> Option<C64> {
        let (v, converged) = self.damped(z, opts.damping, opts.rel_tol, opts.max_iter);
        let v = if converged && v.im >= 0.0 { v } else { self.newton(z, v).filter(|v| v.im >= 0.0)? };
        Some(self.to_m(z, v))
    }

    /// Support edges: values of `x(m) = -1/m + y ∫ t/(1 + t m) dQ(t)` at the
    /// real critical points of `x`.
    fn edges(&self) -> Vec<f64> {
        let y = self.y;
        let atoms = &self.q.atoms;
        let deriv =
            |m: f64| 1.0 / (m * m) - y * atoms.iter().map(|&(t, w)| w * t * t / (1.0 + t * m).powi(2)).sum::<f64>();
        let xm = |m: f64| -1.0 / m + y * atoms.iter().map(|&(t, w)| w * t / (1.0 + t * m)).sum::<f64>();

        let mut poles: Vec<f64> = atoms.iter().map(|a| -1.0 / a.0).collect();
        poles.push(0.0);
        poles.sort_by(f64::total_cmp);
        poles.dedup();

        const SAMPLES: usize = 4000;
        let mut segments: Vec<Box<dyn Fn(f64) -> f64>> = Vec::new();
        let first = poles[0];
        segments.push(Box::new(move |u: f64| first - u / (1.0 - u)));
        for w in poles.windows(2) {
            let (a, b) = (w[0], w[1]);
            segments.push(Box::new(move |u: f64| a + (b - a) * u));
        }
        segments.push(Box::new(|u: f64| u / (1.0 - u)));

        let mut edges = Vec::new();
        for seg in &segments {
            let param = |j: usize| 0.5 * (1.0 - (PI * j as f64 / SAMPLES as f64).cos());
            let mut prev_u = param(1);
            let mut prev = deriv(seg(prev_u));
            for j in 2..SAMPLES {
                let u = param(j);
                let cur = deriv(seg(u));
                if prev.is_finite() && cur.is_finite() && prev.signum() != cur.signum() {
                    let (mut lo, mut hi) = (prev_u, u);
                    let sign_lo = prev.signum();
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if deriv(seg(mid)).signum() == sign_lo {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let x = xm(seg(0.5 * (lo + hi)));
                    if x.is_finite() && x > 0.0 {
                        edges.push(x);
                    }
                }
                prev = cur;
                prev_u = u;
            }
        }
        edges.sort_by(f64::total_cmp);
        edges
    }
}

/// Solves the generalized Marchenko–Pastur equation for population measure
/// `q` and ratio `y`.
pub fn solve_generalized_mp(q: &PopulationMeasure, y: f64, opts: &SolverOptions) -> Result<SpectralLaw> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::Input(format!("aspect ratio must be positive, got {y}")));
    }
    if !(opts.nu > 0.0) {
        return Err(Error::Input(format!("imaginary offset must be positive, got {}", opts.nu)));
    }
    let grid = match &opts.grid {
        Some(g) => {
            if g.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Input("grid must be strictly increasing".into()));
            }
            g.clone()
        }
        None => {
            if opts.grid_points < 2 {
                return Err(Error::Input("grid needs at least two points".into()));
            }
            let top = (1.0 + y.sqrt()).powi(2) * q.max_location() * 1.5;
            let step = top / (opts.grid_points - 1) as f64;
            (0..opts.grid_points).map(|i| i as f64 * step).collect()
        }
    };

    let zero_mass = (1.0 - 1.0 / y).max(0.0);
    let eq = Stieltjes::new(q, y);
    let mut density_grid = Vec::with_capacity(grid.len());
    for &x in &grid {
        let z = C64::new(x, opts.nu);
        let m = eq.solve(z, opts).ok_or(Error::NoConvergence { abscissa: x })?;
        let atom = zero_mass * opts.nu / (x * x + opts.nu * opts.nu);
        let dens = (m.im - atom) / PI;
        if dens < -1e-8 {
            return Err(Error::InversionFailed { abscissa: x, density: dens });
        }
        density_grid.push((x, dens.max(0.0)));
    }

    let support = detect_support(&density_grid, &eq.edges(), opts.support_threshold);

    let mut law =
        SpectralLaw { y, population: q.clone(), nu: opts.nu, support, density_grid, cdf_grid: Vec::new(), zero_mass };
    law.cdf_grid = law.tabulate_cdf(&grid);
    Ok(law)
}

/// Support intervals. The analytic edges are paired up when they are
/// consistent with the grid (an even count, each pair covering grid mass);
/// otherwise the maximal runs of grid points above the threshold are used,
/// with each end snapped to an analytic edge within two grid steps.
fn detect_support(grid: &[(f64, f64)], edges: &[f64], threshold: f64) -> Vec<(f64, f64)> {
    let peak = grid.iter().map(|p| p.1).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let cut = threshold * peak;
    if !edges.is_empty() && edges.len().is_multiple_of(2) {
        let pairs: Vec<(f64, f64)> = edges.chunks(2).map(|c| (c[0], c[1])).collect();
        let covered = pairs.iter().all(|&(a, b)| grid.iter().any(|p| p.0 > a && p.0 < b && p.1 > cut));
        let ordered = pairs.windows(2).all(|w| w[0].1 < w[1].0);
        if covered && ordered {
            return pairs;
        }
    }
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for (i, p) in grid.iter().enumerate() {
        let inside = p.1 > cut && p.0 > 0.0;
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, grid.len() - 1));
    }

    let snap = |idx_in: usize, idx_out: Option<usize>| {
        let x_in = grid[idx_in].0;
        let x_out = idx_out.map(|j| grid[j].0).unwrap_or(x_in);
        let h = (x_in - x_out).abs().max(f64::EPSILON);
        edges
            .iter()
            .copied()
            .filter(|e| (e - x_in).abs() <= 2.0 * h)
            .min_by(|a, b| (a - x_in).abs().total_cmp(&(b - x_in).abs()))
            .unwrap_or(0.5 * (x_in + x_out))
    };

    let mut support: Vec<(f64, f64)> = runs
        .into_iter()
        .map(|(s, e)| {
            let lo = snap(s, s.checked_sub(1));
            let hi = snap(e, (e + 1 < grid.len()).then_some(e + 1));
            (lo.max(f64::MIN_POSITIVE), hi)
        })
        .filter(|(lo, hi)| hi > lo)
        .collect();
    // Snapping can make neighbouring runs touch; merge them.
    support.dedup_by(|b, a| {
        if b.0 <= a.1 {
            a.1 = a.1.max(b.1);
            true
        } else {
            false
        }
    });
    support
}

const CELL_RULE: usize = 8;

impl SpectralLaw {
    /// Density of the continuous part at `x`, refined toward the real axis
    /// by Newton's method from the grid-offset solution.
    pub fn density_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let eq = Stieltjes::new(&self.population, self.y);
        let coarse = C64::new(x, self.nu);
        let (v0, _) = eq.damped(coarse, 0.5, 1e-7, 10_000);
        let v0 = eq.newton(coarse, v0).unwrap_or(v0);
        let fine_nu = 1e-13 * x.max(1.0);
        let fine = C64::new(x, fine_nu);
        let (m, nu) = match eq.newton(fine, v0).filter(|v| v.im >= 0.0) {
            Some(v) => (eq.to_m(fine, v), fine_nu),
            None => (eq.to_m(coarse, v0), self.nu),
        };
        let atom = self.zero_mass * nu / (x * x + nu * nu);
        ((m.im - atom) / PI).max(0.0)
    }

    /// Total probability: the zero atom plus the mass of every support
    /// interval.
    pub fn total_mass(&self) -> f64 {
        self.zero_mass + self.support.iter().map(|&(a, b)| self.interval_mass(a, b, b)).sum::<f64>()
    }

    /// `∫_a^x f` for `x` inside the support interval `[a, b]`, computed in
    /// the angle variable where the integrand is smooth.
    fn interval_mass(&self, a: f64, b: f64, x: f64) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let theta_x = ((c - x) / r).clamp(-1.0, 1.0).acos();
        let gl = GaussLegendre::new(CELL_RULE);
        let panels = 64;
        let step = theta_x / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = p as f64 * step;
                gl.integrate(lo, lo + step, |th| self.density_at(c - r * th.cos()) * r * th.sin())
            })
            .sum()
    }

    fn tabulate_cdf(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        let gl = GaussLegendre::new(CELL_RULE);
        let mut out = Vec::with_capacity(grid.len());
        let mut below = self.zero_mass;
        let mut interval = 0usize;
        let mut theta_prev = 0.0;
        let mut acc = 0.0;
        for &x in grid {
            if x < 0.0 {
                out.push((x, 0.0));
                continue;
            }
            // Close any intervals that lie entirely left of x.
            while interval < self.support.len() && x >= self.support[interval].1 {
                let (a, b) = self.support[interval];
                let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
                acc += gl
                    .integrate(theta_prev, std::f64::consts::PI, |th| self.density_at(c - r * th.cos()) * r * th.sin());
                below += acc;
                acc = 0.0;
                theta_prev = 0.0;
                interval += 1;
            }
            let value = match self.support.get(interval) {
                Some(&(a, b)) if x > a => {
                    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
                    let theta = ((c - x) / r).clamp(-1.0, 1.0).acos();
                    acc += gl.integrate(theta_prev, theta, |th| self.density_at(c - r * th.cos()) * r * th.sin());
                    theta_prev = theta;
                    below + acc
                }
                _ => below,
            };
            out.push((x, value.min(1.0)));
        }
        out
    }
}

impl SpectralDistribution for SpectralLaw {
    fn aspect_ratio(&self) -> f64 {
        self.y
    }

    fn zero_mass(&self) -> f64 {
        self.zero_mass
    }

    fn lower_edge(&self) -> f64 {
        self.support.first().map(|s| s.0).unwrap_or(0.0)
    }

    /// Piecewise-linear interpolation of the tabulated CDF.
    fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let g = &self.cdf_grid;
        if g.is_empty() {
            return self.zero_mass;
        }
        if t <= g[0].0 {
            return if t < self.lower_edge() { self.zero_mass } else { g[0].1 };
        }
        if t >= g[g.len() - 1].0 {
            return g[g.len() - 1].1;
        }
        let j = g.partition_point(|p| p.0 <= t);
        let (x0, f0) = g[j - 1];
        let (x1, f1) = g[j];
        f0 + (f1 - f0) * (t - x0) / (x1 - x0)
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        if !(p <= 1.0) {
            return Err(Error::Input(format!("probability must lie in (0, 1], got {p}")));
        }
        if p <= self.zero_mass {
            return Err(Error::QuantileInAtom { p, zero_mass: self.zero_mass });
        }
        let g = &self.cdf_grid;
        let j = g.partition_point(|q| q.1 < p);
        if j == 0 {
            return Ok(self.lower_edge());
        }
        if j >= g.len() {
            return Ok(self.support.last().map(|s| s.1).unwrap_or(g[g.len() - 1].0));
        }
        let (x0, f0) = g[j - 1];
        let (x1, f1) = g[j];
        if f1 <= f0 {
            return Ok(x1);
        }
        Ok((x0 + (x1 - x0) * (p - f0) / (f1 - f0)).max(self.lower_edge()))
    }

    fn integrate<const N: usize, F>(&self, mut f: F, nodes: usize) -> Result<[f64; N]>
    where
        F: FnMut(f64) -> Result<[f64; N]>,
    {
        let mut acc = [0.0; N];
        let scale = PI / nodes as f64;
        for &(a, b) in &self.support {
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            for theta in chebyshev_angles(nodes) {
                let t = c - r * theta.cos();
                let w = self.density_at(t) * r * theta.sin() * scale;
                let v = f(t)?;
                for k in 0..N {
                    acc[k] += w * v[k];
                }
            }
        }
        Ok(acc)
    }
}

/// Classical eigenvalue locations: `α_i` with `F(α_i) = 1 - i/d`, in
/// descending order, for every `i` with `1 - i/d ≥ zero_mass`. The index
/// whose level equals the zero mass is mapped to the lower support edge.
pub fn classical_locations<L: SpectralDistribution>(law: &L, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::Input("dimension must be positive".into()));
    }
    let zero = law.zero_mass();
    let df = d as f64;
    let mut out = Vec::with_capacity(d);
    for i in 1..=d {
        let p = 1.0 - i as f64 / df;
        if p > zero + 1e-12 {
            out.push(law.quantile(p)?);
        } else if p >= zero - 1e-12 {
            out.push(law.lower_edge());
        } else {
            break;
        }
    }
    Ok(out)
}
