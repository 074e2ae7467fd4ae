//! Command-line harness: run one scheme, compare two, or verify the
//! library against its built-in suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffnet::config::{parse_config_file, parse_weights, ConfigDraft, Scheme, TauSpec};
use diffnet::error::Error;
use diffnet::flux::FluxKind;
use diffnet::{runner, selftest};

#[derive(Parser)]
#[command(name = "diffnet", version, about = "1D diffusion schemes as network blocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme on an input or builtin signal.
    Run(SharedArgs),
    /// Run a named comparison of two schemes.
    Compare(CompareArgs),
    /// Run the built-in verification suites and exit nonzero on failure.
    Selftest,
}

#[derive(Args)]
struct SharedArgs {
    /// Config file with key = value lines; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheme: explicit, fsi, implicit, or multigrid.
    #[arg(long)]
    scheme: Option<String>,
    /// Flux kind: linear, pm_exp, or charbonnier.
    #[arg(long)]
    flux: Option<String>,
    /// Contrast parameter of the flux.
    #[arg(long)]
    lambda: Option<f64>,
    /// Derivative weights, e.g. "1:1.0" or "1:1,2:0.5".
    #[arg(long)]
    weights: Option<String>,
    /// Grid spacing.
    #[arg(long = "h")]
    grid_h: Option<f64>,
    /// Time step, a number or "auto" (stability bound).
    #[arg(long)]
    tau: Option<String>,
    /// Explicit/implicit steps, or FSI cycles.
    #[arg(long)]
    steps: Option<usize>,
    /// FSI cycle length L.
    #[arg(long)]
    cycle_length: Option<usize>,
    /// Inner fixed-point iterations of the implicit step.
    #[arg(long)]
    inner_iters: Option<usize>,
    /// Residual tolerance (implicit early exit / multigrid stop).
    #[arg(long)]
    tol: Option<f64>,
    /// Multigrid levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Pre-smoothing sweeps.
    #[arg(long)]
    pre_smooth: Option<usize>,
    /// Post-smoothing sweeps.
    #[arg(long)]
    post_smooth: Option<usize>,
    /// Jacobi damping factor.
    #[arg(long)]
    omega: Option<f64>,
    /// Multigrid V-cycles.
    #[arg(long)]
    cycles: Option<usize>,
    /// Input signal file (one value per line).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Builtin generator: step, ramp, sine, or random.
    #[arg(long)]
    generator: Option<String>,
    /// Builtin generator length.
    #[arg(long)]
    n: Option<usize>,
    /// Seed for the random generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Path for the final signal.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Path for the trajectory / residual CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comparison mode: fsi_vs_explicit or multigrid_vs_jacobi.
    #[arg(long)]
    mode: String,
    /// Directory for the per-scheme and merged CSV files.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    shared: SharedArgs,
}

fn draft_from_flags(args: &SharedArgs) -> Result<ConfigDraft, Error> {
    Ok(ConfigDraft {
        scheme: args.scheme.as_deref().map(Scheme::parse).transpose()?,
        flux: args.flux.as_deref().map(FluxKind::parse).transpose()?,
        lambda: args.lambda,
        weights: args.weights.as_deref().map(parse_weights).transpose()?,
        h: args.grid_h,
        tau: args.tau.as_deref().map(TauSpec::parse).transpose()?,
        steps: args.steps,
        cycle_length: args.cycle_length,
        inner_iters: args.inner_iters,
        tol: args.tol,
        levels: args.levels,
        pre_smooth: args.pre_smooth,
        post_smooth: args.post_smooth,
        omega: args.omega,
        cycles: args.cycles,
        input: args.input.clone(),
        generator: args.generator.clone(),
        n: args.n,
        seed: args.seed,
        output: args.output.clone(),
        trajectory: args.trajectory.clone(),
    })
}

fn resolve(args: &SharedArgs) -> Result<diffnet::config::ExperimentConfig, Error> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => ConfigDraft::default(),
    };
    file.merge(draft_from_flags(args)?).resolve()
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Run(args) => {
            let cfg = resolve(&args)?;
            println!("{}", runner::run_experiment(&cfg)?);
            Ok(0)
        }
        Command::Compare(args) => {
            let cfg = resolve(&args.shared)?;
            println!("{}", runner::compare(&args.mode, &cfg, &args.out_dir)?);
            Ok(0)
        }
        Command::Selftest => {
            let outcomes = selftest::run_all();
            print!("{}", selftest::render(&outcomes));
            Ok(if outcomes.iter().all(|o| o.passed) { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
