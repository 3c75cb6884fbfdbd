use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use proxtone::constants::{bound_report, compute_constants, Target};
use proxtone::harness::race::{trace_rows, write_csv};
use proxtone::harness::{
    compute_optimum, compute_optimum_with, engineered_spec, gen_synthetic, load_libsvm, race, run_suite,
    OptimumCertificate, OracleMethod, RaceEntry, SyntheticSpec, VerifyOptions,
};
use proxtone::linalg::{dist_sq, SpectralBand, Vector};
use proxtone::objectives::{LossFamily, LossKind};
use proxtone::problem::Problem;
use proxtone::regularizers::Regularizer;
use proxtone::solvers::{run, Algorithm, SolverConfig};
use proxtone::surrogates::{default_band, CurvatureKind, CurvatureStrategy};

#[derive(Parser)]
#[command(name = "proxtone", version, about = "Proximal stochastic Newton-type solvers for regularized finite sums")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and optionally write its trace as CSV.
    Run(RunArgs),
    /// Run several solvers over several seeds and write traces plus a summary.
    Race(RaceArgs),
    /// Compute a certified optimum and cache it.
    Oracle(OracleArgs),
    /// Run the invariant suite; exits nonzero if any check fails.
    Verify(VerifyArgs),
    /// Print problem constants and convergence bounds.
    Constants(ConstantsArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// LIBSVM data file.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic problem as `key=value,...` (keys: n, p, loss, l1, l2, tau,
    /// scale, cond, signal, noise, normalize, seed), or `engineered`.
    #[arg(long)]
    synthetic: Option<String>,
    /// Loss for `--data`; defaults to logistic for binary labels, squared otherwise.
    #[arg(long)]
    loss: Option<LossArg>,
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    /// Ridge term folded into every component.
    #[arg(long)]
    tau: Option<f64>,
    /// Lower end of the curvature band.
    #[arg(long, requires = "band_hi")]
    band_lo: Option<f64>,
    /// Upper end of the curvature band.
    #[arg(long, requires = "band_lo")]
    band_hi: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Squared,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurvatureArg {
    Exact,
    Identity,
    Diagonal,
}

impl From<CurvatureArg> for CurvatureKind {
    fn from(c: CurvatureArg) -> Self {
        match c {
            CurvatureArg::Exact => CurvatureKind::ExactHessian,
            CurvatureArg::Identity => CurvatureKind::ScaledIdentity,
            CurvatureArg::Diagonal => CurvatureKind::Diagonal,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "proxtone")]
    algo: Algorithm,
    #[arg(long, value_enum, default_value = "exact")]
    curvature: CurvatureArg,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cached optimum; computed and written here if missing. Enables the gap column.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(Args)]
struct RaceArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Solver specs `algo[:curvature]`, e.g. `proxtone:exact prox_sg`.
    #[arg(required = true)]
    algos: Vec<String>,
    /// Seeds as `lo..hi` or a comma list.
    #[arg(long, default_value = "0..5")]
    seeds: String,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Output directory for per-run traces and `summary.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cached optimum; computed and written here if missing.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// `prox_newton` (falls back to accelerated gradient) or `accelerated_gradient`.
    #[arg(long)]
    method: Option<OracleMethod>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random points per check.
    #[arg(long, default_value_t = 50)]
    samples: usize,
}

#[derive(Args)]
struct ConstantsArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "exact")]
    curvature: CurvatureArg,
    /// Tolerance for the iteration predictions.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Failure probability for the iteration predictions.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Print bound values for k = 1..=k.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Cached optimum used for the initial distance.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

struct Setup {
    problem: Problem,
    band: SpectralBand,
}

impl ProblemArgs {
    fn build(&self) -> Result<Setup> {
        if self.loss.is_some() && self.data.is_none() {
            bail!("--loss applies to --data; set loss=... inside --synthetic instead");
        }
        let (mut problem, engineered) = match (&self.data, &self.synthetic) {
            (Some(path), _) => {
                let (ds, _) = load_libsvm(path).with_context(|| format!("loading {}", path.display()))?;
                let kind = match self.loss {
                    Some(LossArg::Squared) => LossKind::Squared,
                    Some(LossArg::Logistic) => LossKind::Logistic,
                    None if ds.has_binary_labels() => LossKind::Logistic,
                    None => LossKind::Squared,
                };
                (Problem::new(ds, LossFamily::new(kind, 0.0)?, Regularizer::zero()), false)
            }
            (None, Some(s)) if s.trim() == "engineered" => (gen_synthetic(&engineered_spec(10, 5, 0))?.0, true),
            (None, Some(s)) => {
                let spec: SyntheticSpec = s.parse().context("parsing --synthetic")?;
                (gen_synthetic(&spec)?.0, false)
            }
            (None, None) => bail!("one of --data or --synthetic is required"),
        };
        if self.data.is_some() && self.loss.is_none() && problem.loss.kind == LossKind::Logistic {
            eprintln!("note: binary labels detected, using logistic loss");
        }
        if let Some(tau) = self.tau {
            problem.loss = problem.loss.with_ridge(tau)?;
        }
        if self.l1.is_some() || self.l2.is_some() {
            let l1 = self.l1.unwrap_or(problem.regularizer.l1_weight());
            let l2 = self.l2.unwrap_or(problem.regularizer.l2_weight());
            problem.regularizer = Regularizer::new(l1, l2)?;
        }
        let band = match (self.band_lo, self.band_hi) {
            (Some(lo), Some(hi)) => SpectralBand::new(lo, hi)?,
            _ if engineered => SpectralBand::new(1.0, 1.0)?,
            _ => default_band(&problem)?,
        };
        Ok(Setup { problem, band })
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Race(a) => cmd_race(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Constants(a) => cmd_constants(a),
    }
    .map(|passed| if passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// Loads the certificate at `path` if it exists, otherwise computes and saves it.
fn cached_oracle(problem: &Problem, path: Option<&Path>) -> Result<Option<OptimumCertificate>> {
    let Some(path) = path else { return Ok(None) };
    if path.exists() {
        let cert = OptimumCertificate::load(path).with_context(|| format!("reading {}", path.display()))?;
        if cert.x.len() != problem.p() {
            bail!("{} holds a {}-dimensional optimum, problem has p = {}", path.display(), cert.x.len(), problem.p());
        }
        return Ok(Some(cert));
    }
    let cert = compute_optimum(problem)?;
    cert.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(Some(cert))
}

fn cmd_run(a: RunArgs) -> Result<bool> {
    let Setup { problem, band } = a.problem.build()?;
    let oracle = cached_oracle(&problem, a.oracle.as_deref())?;
    let mut config = SolverConfig::new(&problem, a.algo)?
        .with_curvature(CurvatureStrategy::new(a.curvature.into(), band))
        .with_seed(a.seed)
        .with_epochs(&problem, a.epochs);
    if let Some(o) = &oracle {
        config = config.with_reference(o.x.clone());
    }
    let x0 = Vector::zeros(problem.p());
    let trace = run(&problem, &config, &x0)?;
    if let Some(out) = &a.out {
        write_csv(out, &trace_rows(&trace, oracle.as_ref()))?;
    }
    let last = trace.last();
    println!("algorithm: {}", trace.algorithm);
    println!("iterations: {}", last.k);
    println!("epochs: {}", last.epoch);
    println!("objective: {:.16e}", last.objective);
    if let Some(o) = &oracle {
        println!("gap: {:.6e}", last.objective - o.f);
    }
    println!("gradient_mapping_norm: {:.6e}", problem.gradient_mapping_norm(trace.x_final.view())?);
    println!("converged: {}", trace.converged);
    if trace.inner_cap_hits > 0 {
        println!("inner_cap_hits: {}", trace.inner_cap_hits);
    }
    Ok(true)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi): (u64, u64) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo >= hi {
            bail!("empty seed range '{s}'");
        }
        return Ok((lo..hi).collect());
    }
    s.split(',').map(|t| t.trim().parse::<u64>().with_context(|| format!("bad seed '{t}'"))).collect()
}

fn parse_entry(spec: &str, problem: &Problem, band: SpectralBand) -> Result<RaceEntry> {
    let (algo, curvature) = match spec.split_once(':') {
        Some((a, c)) => (a, Some(c)),
        None => (spec, None),
    };
    let algorithm: Algorithm = algo.parse()?;
    let kind = match curvature {
        None => CurvatureKind::ExactHessian,
        Some(c) => CurvatureArg::from_str(c, true).map_err(|e| anyhow::anyhow!("curvature '{c}': {e}"))?.into(),
    };
    let config = SolverConfig::new(problem, algorithm)?.with_curvature(CurvatureStrategy::new(kind, band));
    Ok(RaceEntry::new(spec.replace(':', "-"), config))
}

fn cmd_race(a: RaceArgs) -> Result<bool> {
    let Setup { problem, band } = a.problem.build()?;
    let seeds = parse_seeds(&a.seeds)?;
    let entries = a.algos.iter().map(|s| parse_entry(s, &problem, band)).collect::<Result<Vec<_>>>()?;
    let oracle = match cached_oracle(&problem, a.oracle.as_deref())? {
        Some(o) => o,
        None => compute_optimum(&problem)?,
    };
    let x0 = Vector::zeros(problem.p());
    let report = race(&problem, &entries, &seeds, a.epochs, &x0, Some(&oracle), a.out.as_deref())?;
    for cell in report.failures() {
        if let Err(msg) = &cell.outcome {
            eprintln!("{} seed {} failed: {msg}", cell.label, cell.seed);
        }
    }
    println!("{:<24} {:>6} {:>5} {:>14} {:>12}", "label", "epoch", "runs", "mean_gap", "std_gap");
    for row in &report.summary {
        if row.epoch % (a.epochs / 10).max(1) == 0 || row.epoch == a.epochs {
            println!(
                "{:<24} {:>6} {:>5} {:>14.6e} {:>12.3e}",
                row.label,
                row.epoch,
                row.runs,
                row.mean_gap.unwrap_or(f64::NAN),
                row.std_gap.unwrap_or(f64::NAN)
            );
        }
    }
    let clean = report.failures().next().is_none();
    Ok(clean)
}

fn cmd_oracle(a: OracleArgs) -> Result<bool> {
    let Setup { problem, .. } = a.problem.build()?;
    let cert = match a.method {
        Some(m) => compute_optimum_with(&problem, m)?,
        None => compute_optimum(&problem)?,
    };
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        cert.save(out)?;
    }
    println!("method: {}", cert.method);
    println!("f: {:.16e}", cert.f);
    println!("certificate: {:.3e}", cert.certificate);
    println!("iterations: {}", cert.iterations);
    println!("nonzeros: {}/{}", cert.x.iter().filter(|v| **v != 0.0).count(), cert.x.len());
    Ok(true)
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let opts = VerifyOptions { seed: a.seed, samples: a.samples, ..VerifyOptions::default() };
    let report = run_suite(&opts)?;
    for check in &report.checks {
        println!("{check}");
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", report.checks.len(), failed);
    Ok(report.all_passed())
}

fn cmd_constants(a: ConstantsArgs) -> Result<bool> {
    let Setup { problem, band } = a.problem.build()?;
    let strategy = CurvatureStrategy::new(a.curvature.into(), band);
    let c = compute_constants(&problem, &strategy)?;
    let oracle = match cached_oracle(&problem, a.oracle.as_deref())? {
        Some(o) => o,
        None => compute_optimum(&problem)?,
    };
    let x0 = Vector::zeros(problem.p());
    let d2 = dist_sq(oracle.x.view(), x0.view());
    let report = bound_report(&c, d2, a.k, &[(a.eps, a.delta, Target::Value), (a.eps, a.delta, Target::Solution)])?;

    println!("n: {}", c.n);
    println!("p: {}", c.p);
    println!("L_max: {}", c.l_max);
    println!("L_avg: {}", c.l_avg);
    println!("mu_g: {}", c.mu_g);
    println!("mu_h: {}", c.mu_h);
    println!("m: {}", c.m);
    println!("M: {}", c.big_m);
    println!("K_avg: {}", c.k_avg);
    println!("K_max: {}", c.k_max);
    println!("rho: {}", report.rho);
    println!("C: {}", report.c);
    println!("vacuous: {}", report.vacuous);
    println!("f_star: {:.16e}", oracle.f);
    println!("dist0_sq: {}", report.dist0_sq);
    for p in &report.predictions {
        let k = p.iterations.map_or_else(|| "none".to_string(), |k| k.to_string());
        println!("iterations[{}, eps={}, delta={}]: {k}", p.target, p.eps, p.delta);
    }
    for (i, (k, b1)) in report.theorem1.iter().enumerate() {
        match report.theorem2.get(i) {
            Some((_, b2)) => println!("bound[{k}]: value={b1:.6e} solution={b2:.6e}"),
            None => println!("bound[{k}]: value={b1:.6e}"),
        }
    }
    Ok(true)
}
