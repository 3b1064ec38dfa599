//! `dpcov` command-line front end.
//!
//! Exit codes: 0 accept (or success), 3 reject, 1 usage or input error,
//! 2 numerical failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dpcov::moments::DEFAULT_NODES;
use dpcov::rmt::SpectralDistribution;
use dpcov::{
    critical_value, moment_table, run_test, solve_generalized_mp, to_json, DataMatrix, ExperimentConfig, Kappa,
    MarchenkoPastur, ModelKind, NoiseLaw, PopulationMeasure, PrivacyParams, SigmaSpec, SolverOptions, Source,
    TestConfig, TestReport,
};
use serde::Serialize;

const EXIT_REJECT: u8 = 3;
const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "dpcov", version, about = "Differentially private integrated test for large covariance matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the private test on a CSV data matrix.
    Test(TestArgs),
    /// Run a size/power simulation.
    Simulate(SimulateArgs),
    /// Print the null moment table and critical value for (y, b, alpha).
    Calibrate(CalibrateArgs),
    /// Tabulate a limiting spectral law as CSV.
    Rmt(RmtArgs),
    /// Recompute the decision stored in a test report.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SourceArg {
    Covariance,
    Correlation,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Covariance => Source::Covariance,
            SourceArg::Correlation => Source::Correlation,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Gaussian,
    Uniform,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gaussian => ModelKind::Gaussian,
            ModelArg::Uniform => ModelKind::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum FamilyArg {
    ScaledIdentity,
    Power1,
    Power2,
    Power3,
}

#[derive(Args, Debug, Serialize)]
struct TestArgs {
    /// Data matrix, rows are observations.
    #[arg(long)]
    input: PathBuf,
    /// The first CSV line is a header.
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum, default_value = "covariance")]
    source: SourceArg,
    /// Privacy budget.
    #[arg(long)]
    epsilon: f64,
    /// Preset bound on tr(Σ)/d for the first release.
    #[arg(long, default_value_t = 2.0)]
    gamma_tilde: f64,
    /// Sub-Gaussian parameter.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
    #[arg(long, env = "DPCOV_SEED", default_value_t = 0)]
    seed: u64,
    /// Subtract column means before forming the covariance.
    #[arg(long)]
    center: bool,
    /// Outer quadrature nodes for the moment table.
    #[arg(long, default_value_t = DEFAULT_NODES)]
    nodes: usize,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// TOML or JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Covariance family.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Comma-separated δ values for the scaled identity family.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    delta: Option<Vec<f64>>,
    /// Comma-separated `NxD` pairs, e.g. `400x200,800x400`.
    #[arg(long, value_delimiter = ',', value_parser = parse_dims)]
    dims: Option<Vec<(usize, usize)>>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, env = "DPCOV_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    gamma_tilde: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Share data draws across the epsilon columns.
    #[arg(long)]
    crn: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Long-format CSV of rejection rates.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Full result, including the resolved configuration, as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CalibrateArgs {
    /// Aspect ratio d/n.
    #[arg(long)]
    y: f64,
    /// Laplace noise scale.
    #[arg(long)]
    b: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
    #[arg(long, env = "DPCOV_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_NODES)]
    nodes: usize,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RmtArgs {
    /// Aspect ratio d/n.
    #[arg(long)]
    y: f64,
    /// Population covariance family; without it the population is the
    /// identity and the closed-form law is used.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    delta: f64,
    /// Dimension used to build the family's population spectrum.
    #[arg(long, default_value_t = 1000)]
    d: usize,
    #[arg(long, default_value_t = 2001)]
    grid_points: usize,
    /// Imaginary offset of the Stieltjes evaluation.
    #[arg(long, default_value_t = 1e-5)]
    nu: f64,
    /// Table of `x,density,cdf`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table of `p,quantile` at this many equally spaced levels.
    #[arg(long)]
    quantiles: Option<usize>,
    #[arg(long, requires = "quantiles")]
    quantiles_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// A JSON report written by `dpcov test`.
    report: PathBuf,
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let (n, d) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NxD, got {s:?}"))?;
    let n = n.trim().parse().map_err(|e| format!("bad n in {s:?}: {e}"))?;
    let d = d.trim().parse().map_err(|e| format!("bad d in {s:?}: {e}"))?;
    Ok((n, d))
}

fn sigma_spec(family: FamilyArg, delta: f64) -> SigmaSpec {
    match family {
        FamilyArg::ScaledIdentity => SigmaSpec::ScaledIdentity { delta },
        FamilyArg::Power1 => SigmaSpec::Power1,
        FamilyArg::Power2 => SigmaSpec::Power2,
        FamilyArg::Power3 => SigmaSpec::Power3,
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct TestOutput<'a> {
    invocation: &'a TestArgs,
    #[serde(flatten)]
    report: &'a TestReport,
}

fn cmd_test(args: TestArgs) -> Result<u8> {
    let x = DataMatrix::from_csv_path(&args.input, args.header)?;
    let config = TestConfig {
        privacy: PrivacyParams {
            epsilon: args.epsilon,
            gamma_tilde: args.gamma_tilde,
            sigma: args.sigma,
            ..PrivacyParams::default()
        },
        alpha: args.alpha,
        mc_samples: args.mc_samples,
        seed: args.seed,
        source: args.source.into(),
        centered: args.center,
        nodes: args.nodes,
    };
    let report = run_test(&x, &config)?;
    let json = to_json(&TestOutput { invocation: &args, report: &report })?;
    emit(args.json_out.as_deref(), &(json + "\n"))?;
    let s = &report.statistics;
    eprintln!(
        "T = [{:.4}, {:.4}, {:.4}], T_max = {:.4}, z_alpha = {:.4}, p = {:.4}: {:?}",
        s.t[0], s.t[1], s.t[2], s.t_max, report.critical.z_alpha, report.p_max, report.decision
    );
    Ok(if report.decision.is_reject() { EXIT_REJECT } else { 0 })
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    Ok(if is_json {
        serde_json::from_str(&text).with_context(|| format!("invalid configuration {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("invalid configuration {}", path.display()))?
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let mut config = match &args.config {
        Some(p) => load_experiment(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = args.model {
        config.model = m.into();
    }
    match (args.family, &args.delta) {
        (None | Some(FamilyArg::ScaledIdentity), Some(deltas)) => {
            config.sigmas = deltas.iter().map(|&delta| SigmaSpec::ScaledIdentity { delta }).collect();
        }
        (Some(_), Some(_)) => bail!("--delta only applies to the scaled_identity family"),
        (Some(f), None) => config.sigmas = vec![sigma_spec(f, 0.0)],
        (None, None) => {}
    }
    if let Some(d) = args.dims {
        config.dims = d;
    }
    if let Some(e) = args.epsilons {
        config.epsilons = e;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(g) = args.gamma_tilde {
        config.gamma_tilde = g;
    }
    if let Some(m) = args.mc_samples {
        config.mc_samples = m;
    }
    if let Some(n) = args.nodes {
        config.nodes = n;
    }
    if args.crn {
        config.common_random_numbers = true;
    }
    if args.threads.is_some() {
        config.threads = args.threads;
    }
    let result = dpcov::run_experiment(&config)?;
    if let Some(p) = &args.csv_out {
        let file = fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
        result.write_csv(io::BufWriter::new(file))?;
    }
    if let Some(p) = &args.json_out {
        emit(Some(p), &(to_json(&result)? + "\n"))?;
    }
    let mut text = format!("# config: {}\n", serde_json::to_string(&config)?);
    text.push_str(&result.pretty_table());
    emit(None, &text)?;
    let failures: usize = result.cells.iter().map(|c| c.failures).sum();
    if failures > 0 {
        eprintln!("{failures} replications failed");
    }
    eprintln!("wall clock {:.1}s", result.wall_clock_seconds);
    Ok(0)
}

#[derive(Serialize)]
struct Calibration<'a> {
    config: &'a CalibrateArgs,
    mu: [f64; 3],
    v: [[f64; 3]; 3],
    gamma: [f64; 3],
    r: [[f64; 3]; 3],
    z_alpha: f64,
    nodes_used: usize,
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<u8> {
    let mp = MarchenkoPastur::new(args.y)?;
    let table = moment_table(&mp, NoiseLaw::new(args.b)?, Kappa::Null, args.nodes)?;
    let crit = critical_value(&table.r, args.alpha, args.mc_samples, args.seed)?;
    let rows = |m: &nalgebra::Matrix3<f64>| std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
    let out = Calibration {
        config: &args,
        mu: table.mu.into(),
        v: rows(&table.v),
        gamma: table.gamma.into(),
        r: rows(&table.r),
        z_alpha: crit.z_alpha,
        nodes_used: table.nodes,
    };
    emit(args.json_out.as_deref(), &(to_json(&out)? + "\n"))?;
    Ok(0)
}

fn write_table<L: SpectralDistribution>(law: &L, rows: &[(f64, f64)], args: &RmtArgs) -> Result<()> {
    let mut text = String::from("x,density,cdf\n");
    for &(x, f) in rows {
        text.push_str(&format!("{x},{f},{}\n", law.cdf(x)));
    }
    emit(args.out.as_deref(), &text)?;
    if let Some(q) = args.quantiles {
        if q < 2 {
            bail!("--quantiles needs at least 2 levels");
        }
        let zero = law.zero_mass();
        let mut text = String::from("p,quantile\n");
        for i in 1..=q {
            let p = zero + (1.0 - zero) * i as f64 / q as f64;
            text.push_str(&format!("{p},{}\n", law.quantile(p)?));
        }
        match &args.quantiles_out {
            Some(path) => emit(Some(path), &text)?,
            None => emit(None, &text)?,
        }
    }
    Ok(())
}

fn cmd_rmt(args: RmtArgs) -> Result<u8> {
    if args.grid_points < 2 {
        bail!("--grid-points must be at least 2");
    }
    eprintln!("# config: {}", serde_json::to_string(&args)?);
    match args.family {
        None => {
            let mp = MarchenkoPastur::new(args.y)?;
            let top = 1.05 * mp.lambda_plus;
            let rows: Vec<(f64, f64)> = (0..args.grid_points)
                .map(|i| {
                    let x = top * i as f64 / (args.grid_points - 1) as f64;
                    (x, mp.density(x))
                })
                .collect();
            write_table(&mp, &rows, &args)?;
        }
        Some(f) => {
            let q: PopulationMeasure = sigma_spec(f, args.delta).population_measure(args.d)?;
            let opts = SolverOptions { nu: args.nu, grid_points: args.grid_points, ..SolverOptions::default() };
            let law = solve_generalized_mp(&q, args.y, &opts)?;
            let rows = law.density_grid.clone();
            write_table(&law, &rows, &args)?;
        }
    }
    Ok(0)
}

fn cmd_check(args: CheckArgs) -> Result<u8> {
    let text = fs::read_to_string(&args.report).with_context(|| format!("cannot read {}", args.report.display()))?;
    let report: TestReport = serde_json::from_str(&text).context("not a test report")?;
    let decision = report.verify()?;
    println!("{}", serde_json::to_string(&decision)?.trim_matches('"'));
    Ok(if decision.is_reject() { EXIT_REJECT } else { 0 })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<dpcov::Error>() {
        Some(e) if !e.is_usage() => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Rmt(a) => cmd_rmt(a),
        Command::Check(a) => cmd_check(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
