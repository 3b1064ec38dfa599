//! Data generators and the empirical size/power experiment runner.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{run_test_spectrum, TestConfig};
use crate::moments::{MomentCache, DEFAULT_NODES};
use crate::privacy::PrivacyParams;
use crate::rmt::PopulationMeasure;
use crate::seed::{self, stream};
use crate::spectra::{covariance_spectrum, DataMatrix, Source};

/// Distribution of the standardized coordinates `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `z ~ N(0, I)`
    #[default]
    Gaussian,
    /// `z` uniform on `[-√3, √3]^d`
    Uniform,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Uniform => "uniform",
        }
    }
}

/// Population covariance families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SigmaSpec {
    /// `(1 + δ) I`
    ScaledIdentity { delta: f64 },
    /// `diag(1, 0.05, …, 0.05)`
    Power1,
    /// `σ_ij = 2^{-|i-j|}`
    Power2,
    /// `diag(2, …, 2, 0.5, …, 0.5)`, halves of equal size
    Power3,
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::ScaledIdentity { delta: 0.0 }
    }
}

impl SigmaSpec {
    pub fn family(&self) -> &'static str {
        match self {
            SigmaSpec::ScaledIdentity { .. } => "scaled_identity",
            SigmaSpec::Power1 => "power1",
            SigmaSpec::Power2 => "power2",
            SigmaSpec::Power3 => "power3",
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            SigmaSpec::ScaledIdentity { delta } => Some(*delta),
            _ => None,
        }
    }

    fn diagonal(&self, d: usize) -> Result<Option<Vec<f64>>> {
        Ok(match *self {
            SigmaSpec::ScaledIdentity { delta } => {
                if !(1.0 + delta > 0.0) {
                    return Err(Error::Input(format!("delta must exceed -1, got {delta}")));
                }
                Some(vec![1.0 + delta; d])
            }
            SigmaSpec::Power1 => Some((0..d).map(|i| if i == 0 { 1.0 } else { 0.05 }).collect()),
            SigmaSpec::Power2 => None,
            SigmaSpec::Power3 => {
                if !d.is_multiple_of(2) {
                    return Err(Error::Input(format!("power3 needs an even dimension, got {d}")));
                }
                Some((0..d).map(|i| if i < d / 2 { 2.0 } else { 0.5 }).collect())
            }
        })
    }

    fn check_dim(d: usize) -> Result<()> {
        if d < 2 {
            return Err(Error::Input(format!("dimension must be at least 2, got {d}")));
        }
        Ok(())
    }

    /// The `d × d` covariance matrix.
    pub fn matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        Self::check_dim(d)?;
        Ok(match self.diagonal(d)? {
            Some(diag) => DMatrix::from_diagonal(&diag.into()),
            None => DMatrix::from_fn(d, d, |i, j| 0.5f64.powi(i.abs_diff(j) as i32)),
        })
    }

    /// Symmetric square root of [`matrix`](Self::matrix).
    pub fn sqrt(&self, d: usize) -> Result<DMatrix<f64>> {
        Self::check_dim(d)?;
        Ok(match self.diagonal(d)? {
            Some(diag) => DMatrix::from_diagonal(&diag.iter().map(|v| v.sqrt()).collect::<Vec<_>>().into()),
            None => {
                let eig = SymmetricEigen::new(self.matrix(d)?);
                let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
            }
        })
    }

    /// Empirical spectral distribution of the covariance matrix.
    pub fn population_measure(&self, d: usize) -> Result<PopulationMeasure> {
        Self::check_dim(d)?;
        match self.diagonal(d)? {
            Some(diag) => PopulationMeasure::from_eigenvalues(&diag),
            None => {
                let eig = SymmetricEigen::new(self.matrix(d)?);
                PopulationMeasure::from_eigenvalues(eig.eigenvalues.as_slice())
            }
        }
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Draws `n` rows `x = Σ^{1/2} z`.
pub fn generate_data<R: Rng + ?Sized>(
    model: ModelKind,
    sigma: &SigmaSpec,
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<DataMatrix> {
    let root = sigma.sqrt(d)?;
    generate_with_root(model, &root, n, rng)
}

fn generate_with_root<R: Rng + ?Sized>(
    model: ModelKind,
    root: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<DataMatrix> {
    let d = root.nrows();
    // Row-major fill so the draw order is "observation by observation".
    let mut z = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            z[(i, j)] = match model {
                ModelKind::Gaussian => StandardNormal.sample(rng),
                ModelKind::Uniform => rng.random_range(-SQRT3..=SQRT3),
            };
        }
    }
    let diagonal = root.is_square() && (0..d).all(|i| (0..d).all(|j| i == j || root[(i, j)] == 0.0));
    if diagonal {
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col *= root[(j, j)];
        }
        DataMatrix::new(z)
    } else {
        DataMatrix::new(z * root)
    }
}

/// Settings for a size/power experiment. Cells are the product
/// `sigmas × dims × epsilons`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub sigmas: Vec<SigmaSpec>,
    /// `(n, d)` pairs.
    pub dims: Vec<(usize, usize)>,
    pub epsilons: Vec<f64>,
    pub alpha: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub gamma_tilde: f64,
    pub mc_samples: usize,
    pub nodes: usize,
    /// Share the data draws across the epsilon columns of a row.
    pub common_random_numbers: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Gaussian,
            sigmas: vec![SigmaSpec::default()],
            dims: vec![(400, 200)],
            epsilons: vec![1.0, 2.0, 4.0, 8.0],
            alpha: 0.05,
            replications: 2000,
            master_seed: 0,
            gamma_tilde: 2.0,
            mc_samples: 100_000,
            nodes: DEFAULT_NODES,
            common_random_numbers: false,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Input("replications must be at least 1".into()));
        }
        if self.sigmas.is_empty() || self.dims.is_empty() || self.epsilons.is_empty() {
            return Err(Error::Input("sigmas, dims and epsilons must be non-empty".into()));
        }
        for &e in &self.epsilons {
            PrivacyParams::new(e)?;
        }
        for &(n, d) in &self.dims {
            if n < 2 || d < 2 {
                return Err(Error::Input(format!("invalid dimensions (n = {n}, d = {d})")));
            }
            for s in &self.sigmas {
                s.diagonal(d)?;
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.mc_samples == 0 {
            return Err(Error::Input("mc_samples must be positive".into()));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (si, sigma) in self.sigmas.iter().enumerate() {
            for (di, &(n, d)) in self.dims.iter().enumerate() {
                for &epsilon in &self.epsilons {
                    out.push(Cell {
                        index: out.len() as u64,
                        data_index: (si * self.dims.len() + di) as u64,
                        sigma: *sigma,
                        n,
                        d,
                        epsilon,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    index: u64,
    data_index: u64,
    sigma: SigmaSpec,
    n: usize,
    d: usize,
    epsilon: f64,
}

pub const STATISTICS: [&str; 4] = ["T1", "T2", "T3", "Tmax"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: ModelKind,
    pub sigma: SigmaSpec,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    /// Rejection rates of T1, T2, T3, Tmax.
    pub rates: [f64; 4],
    pub stderr: [f64; 4],
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    /// First failure message, if any.
    pub first_failure: Option<String>,
    /// Mean and variance of the signed standardized statistics.
    pub z_mean: [f64; 3],
    pub z_var: [f64; 3],
    /// Seed the replication seeds of this cell derive from.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub wall_clock_seconds: f64,
    pub config: ExperimentConfig,
}

struct Replication {
    reject: [bool; 4],
    z: [f64; 3],
}

fn run_replication(
    config: &ExperimentConfig,
    cell: &Cell,
    root: &DMatrix<f64>,
    rep: u64,
    cache: &MomentCache,
) -> Result<Replication> {
    let data_seed = if config.common_random_numbers {
        seed::mix(config.master_seed, cell.data_index, rep)
    } else {
        seed::mix(config.master_seed, cell.index, rep)
    };
    let mut rng = seed::rng_for(data_seed, stream::DATA, 0);
    let x = generate_with_root(config.model, root, cell.n, &mut rng)?;
    let spectrum = covariance_spectrum(&x, false);
    let test = TestConfig {
        privacy: PrivacyParams { epsilon: cell.epsilon, gamma_tilde: config.gamma_tilde, ..PrivacyParams::default() },
        alpha: config.alpha,
        mc_samples: config.mc_samples,
        seed: seed::mix(config.master_seed ^ stream::REPLICATION, cell.index, rep),
        source: Source::Covariance,
        centered: false,
        nodes: config.nodes,
    };
    let report = run_test_spectrum(&spectrum, &test, Some(cache))?;
    let m = report.marginal_reject;
    Ok(Replication { reject: [m[0], m[1], m[2], report.decision.is_reject()], z: report.statistics.z })
}

fn run_cell(config: &ExperimentConfig, cell: &Cell, cache: &MomentCache) -> Result<CellResult> {
    let root = cell.sigma.sqrt(cell.d)?;
    let outcomes: Vec<Result<Replication>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(config, cell, &root, rep, cache))
        .collect();
    let mut counts = [0usize; 4];
    let mut reps = 0usize;
    let mut failures = 0usize;
    let mut first_failure = None;
    let mut zs = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            Ok(r) => {
                reps += 1;
                for (c, &rej) in counts.iter_mut().zip(&r.reject) {
                    *c += rej as usize;
                }
                zs.push(r.z);
            }
            Err(e) => {
                failures += 1;
                first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let denom = reps.max(1) as f64;
    let rates = counts.map(|c| c as f64 / denom);
    let stderr = rates.map(|p| (p * (1.0 - p) / denom).sqrt());
    let mut z_mean = [0.0; 3];
    let mut z_var = [0.0; 3];
    for m in 0..3 {
        z_mean[m] = zs.iter().map(|z| z[m]).sum::<f64>() / denom;
        z_var[m] = zs.iter().map(|z| (z[m] - z_mean[m]).powi(2)).sum::<f64>() / (denom - 1.0).max(1.0);
    }
    Ok(CellResult {
        model: config.model,
        sigma: cell.sigma,
        n: cell.n,
        d: cell.d,
        epsilon: cell.epsilon,
        rates,
        stderr,
        reps,
        failures,
        first_failure,
        z_mean,
        z_var,
        seed: seed::mix(config.master_seed, cell.index, 0),
    })
}

/// Runs every cell. Replications use seeds derived from
/// `(master_seed, cell, replication)`, so the tables do not depend on the
/// number of threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let cache = MomentCache::new();
    let body = || -> Result<Vec<CellResult>> { config.cells().iter().map(|c| run_cell(config, c, &cache)).collect() };
    let cells = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Input(format!("cannot build thread pool: {e}")))?
            .install(body)?,
        None => body()?,
    };
    Ok(ExperimentResult { cells, wall_clock_seconds: start.elapsed().as_secs_f64(), config: config.clone() })
}

impl ExperimentResult {
    /// Long-format CSV, one row per cell and statistic.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record([
            "model",
            "family",
            "delta",
            "n",
            "d",
            "epsilon",
            "statistic",
            "rate",
            "stderr",
            "reps",
            "seed",
        ])?;
        for c in &self.cells {
            for (k, stat) in STATISTICS.iter().enumerate() {
                w.write_record([
                    c.model.name().to_string(),
                    c.sigma.family().to_string(),
                    c.sigma.delta().map(|d| d.to_string()).unwrap_or_default(),
                    c.n.to_string(),
                    c.d.to_string(),
                    c.epsilon.to_string(),
                    stat.to_string(),
                    c.rates[k].to_string(),
                    c.stderr[k].to_string(),
                    c.reps.to_string(),
                    c.seed.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One block per `(family, δ)`, rows `(n, d)` × statistic, columns ε.
    pub fn pretty_table(&self) -> String {
        let mut out = String::new();
        let eps = &self.config.epsilons;
        let _ = writeln!(
            out,
            "model: {}, alpha = {}, replications = {}, seed = {}",
            self.config.model.name(),
            self.config.alpha,
            self.config.replications,
            self.config.master_seed
        );
        let per_row = eps.len();
        for block in self.cells.chunks(per_row * self.config.dims.len()) {
            let sigma = block[0].sigma;
            let label = match sigma.delta() {
                Some(d) => format!("{} (delta = {d})", sigma.family()),
                None => sigma.family().to_string(),
            };
            let _ = writeln!(out, "\n{label}");
            let _ = write!(out, "{:>12} {:>6}", "(n, d)", "stat");
            for e in eps {
                let _ = write!(out, " {:>8}", format!("eps={e}"));
            }
            out.push('\n');
            for row in block.chunks(per_row) {
                let dims = format!("({}, {})", row[0].n, row[0].d);
                for (k, stat) in STATISTICS.iter().enumerate() {
                    let _ = write!(out, "{:>12} {:>6}", if k == 0 { dims.as_str() } else { "" }, stat);
                    for c in row {
                        let _ = write!(out, " {:>8.3}", c.rates[k]);
                    }
                    out.push('\n');
                }
                let failures: usize = row.iter().map(|c| c.failures).sum();
                if failures > 0 {
                    let _ = writeln!(out, "{:>12} {failures} failed replications", "");
                }
            }
        }
        out
    }
}
