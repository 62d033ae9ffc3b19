use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsq_core::estimator::Backend;
use lsq_core::experiment::{run_solve, run_sweep, verify_saved, HarnessError, SweepRequest};
use lsq_core::formats::{write_lsm, write_vec};
use lsq_core::instance::{generate_instance, Flavor, InstanceSpec};
use lsq_core::report::{InstanceSource, RunRequest};
use lsq_core::solver::SolverConfig;

/// Least-squares solves by length-square sampling.
#[derive(Parser, Debug)]
#[command(name = "lsq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded instance as `.lsm` and `.vec` files.
    Generate(GenerateArgs),
    /// Solve one instance and write a JSON report.
    Solve(SolveArgs),
    /// Solve over a grid of sketch sizes and seeds and write a CSV.
    Sweep(SweepArgs),
    /// Replay a saved report and run the oracle checks on it.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FlavorArg {
    SyntheticLowrank,
    PortfolioReturns,
}

impl From<FlavorArg> for Flavor {
    fn from(f: FlavorArg) -> Self {
        match f {
            FlavorArg::SyntheticLowrank => Flavor::SyntheticLowrank,
            FlavorArg::PortfolioReturns => Flavor::PortfolioReturns,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Manual,
    Theoretical,
}

#[derive(Args, Debug, Clone)]
struct ShapeArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Rank of the instance, also the solver's rank bound.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Condition bound, also the solver's `kappa`.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    projection_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = FlavorArg::SyntheticLowrank)]
    flavor: FlavorArg,
    /// Complex Gaussian factors.
    #[arg(long)]
    complex: bool,
    /// Instance seed; defaults to the solver seed.
    #[arg(long)]
    instance_seed: Option<u64>,
}

impl ShapeArgs {
    fn spec(&self, seed: u64) -> Result<InstanceSpec, HarnessError> {
        let (Some(m), Some(n)) = (self.m, self.n) else {
            return Err(HarnessError::Usage("--m and --n are required to generate an instance".into()));
        };
        Ok(InstanceSpec {
            m,
            n,
            k: self.k,
            kappa: self.kappa,
            projection_fraction: self.projection_fraction,
            noise: self.noise,
            seed: self.instance_seed.unwrap_or(seed),
            flavor: self.flavor.into(),
            complex: self.complex,
        })
    }
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, value_enum, default_value_t = BackendArg::Exact)]
    backend: BackendArg,
    /// Fixed estimator precision for the sampled backend.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    sigma_floor: Option<f64>,
    #[arg(long)]
    rejection_cap: Option<u64>,
    #[arg(long, default_value_t = 5000)]
    max_r: usize,
    #[arg(long, default_value_t = 20_000)]
    max_c: usize,
    /// Run sketch sizes beyond `--max-r` and `--max-c`.
    #[arg(long)]
    force: bool,
}

impl SolverArgs {
    fn config(&self, shape: &ShapeArgs, seed: u64) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            eta: self.eta,
            kappa: shape.kappa,
            k: shape.k,
            backend: match self.backend {
                BackendArg::Exact => Backend::Exact,
                BackendArg::Sampled => Backend::Sampled,
            },
            rejection_cap: self.rejection_cap,
            seed,
            sigma_floor: self.sigma_floor,
            max_r: self.max_r,
            max_c: self.max_c,
            force: self.force,
            xi_override: self.xi,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, env = "LSQ_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_matrix: PathBuf,
    #[arg(long)]
    out_rhs: PathBuf,
    /// Also write the instance spec as JSON.
    #[arg(long)]
    out_spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Matrix file instead of a generated instance.
    #[arg(long, requires = "b")]
    load: Option<PathBuf>,
    /// Right-hand side file for `--load`.
    #[arg(long, requires = "load")]
    b: Option<PathBuf>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Manual)]
    mode: ModeArg,
    #[arg(long, env = "LSQ_SEED", default_value_t = 0)]
    seed: u64,
    /// 1-based solution entries to query.
    #[arg(long, value_delimiter = ',')]
    query: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    samples: u64,
    /// Compare against the dense oracle.
    #[arg(long)]
    verify: bool,
    /// Include wall-clock stage timings in the report.
    #[arg(long)]
    timings: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    r: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    c: Vec<usize>,
    /// Pair the i-th `r` with the i-th `c` instead of the full grid.
    #[arg(long)]
    zip: bool,
    /// Explicit seeds; otherwise `--repeats` seeds starting at `--seed`.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, env = "LSQ_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    #[arg(long, default_value_t = 0)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// CSV path; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Saved report from `solve`.
    #[arg(long)]
    report: PathBuf,
    /// Where to write the verified report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| HarnessError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn generate(args: GenerateArgs) -> Result<(), HarnessError> {
    let spec = args.shape.spec(args.seed)?;
    let inst = generate_instance(&spec)?;
    write_lsm(&args.out_matrix, &inst.dense_matrix())?;
    write_vec(&args.out_rhs, &inst.b)?;
    if let Some(path) = args.out_spec {
        let json = serde_json::to_string_pretty(&spec).expect("spec serializes");
        write_output(Some(&path), &(json + "\n"))?;
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<(), HarnessError> {
    let instance = match (&args.load, &args.b) {
        (Some(matrix), Some(rhs)) => {
            if args.shape.m.is_some() || args.shape.n.is_some() {
                return Err(HarnessError::Usage("--load cannot be combined with --m/--n".into()));
            }
            InstanceSource::Loaded {
                matrix: matrix.clone(),
                rhs: rhs.clone(),
            }
        }
        _ => InstanceSource::Generated {
            spec: args.shape.spec(args.seed)?,
        },
    };
    let mut config = args.solver.config(&args.shape, args.seed);
    config.manual = match (args.mode, args.r, args.c) {
        (ModeArg::Theoretical, _, _) => None,
        (ModeArg::Manual, Some(r), Some(c)) => Some((r, c)),
        (ModeArg::Manual, _, _) => {
            return Err(HarnessError::Usage("manual mode needs --r and --c (or use --mode theoretical)".into()))
        }
    };
    let req = RunRequest {
        instance,
        config,
        queries: args.query,
        samples: args.samples,
        verify: args.verify,
        timings: args.timings,
    };
    match run_solve(&req) {
        Ok(report) => write_output(args.out.as_deref(), &report.to_json()),
        Err(HarnessError::Verification { report, failures }) => {
            write_output(args.out.as_deref(), &report.to_json())?;
            Err(HarnessError::Verification { report, failures })
        }
        Err(e) => Err(e),
    }
}

fn sweep(args: SweepArgs) -> Result<(), HarnessError> {
    let seeds = if args.seeds.is_empty() {
        (0..args.repeats).map(|i| args.seed.wrapping_add(i)).collect()
    } else {
        args.seeds.clone()
    };
    let base = args.shape.spec(0)?;
    let req = SweepRequest {
        base,
        rs: args.r,
        cs: args.c,
        zip: args.zip,
        seeds,
        config: args.solver.config(&args.shape, 0),
        samples: args.samples,
        jobs: args.jobs,
    };
    let (outcome, err) = match run_sweep(&req) {
        Ok(o) => (o, None),
        Err(HarnessError::SweepCheck { outcome, failures }) => {
            ((*outcome).clone(), Some(HarnessError::SweepCheck { outcome, failures }))
        }
        Err(e) => return Err(e),
    };
    write_output(args.csv.as_deref(), &outcome.csv())?;
    for check in &outcome.checks {
        let status = match (check.applicable, check.passed) {
            (false, _) => "skip",
            (true, true) => "pass",
            (true, false) => "FAIL",
        };
        eprintln!("{status} {}: {}", check.name, check.detail);
    }
    err.map_or(Ok(()), Err)
}

fn verify(args: VerifyArgs) -> Result<(), HarnessError> {
    let text = fs::read_to_string(&args.report)
        .map_err(|e| HarnessError::Usage(format!("cannot read {}: {e}", args.report.display())))?;
    match verify_saved(&text) {
        Ok(report) => write_output(args.out.as_deref(), &report.to_json()),
        Err(HarnessError::Verification { report, failures }) => {
            write_output(args.out.as_deref(), &report.to_json())?;
            Err(HarnessError::Verification { report, failures })
        }
        Err(e) => Err(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lsq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
