mod commands;
mod error;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netred::optimizer::OptimizerSettings;

use crate::error::CliError;

/// Structure-preserving reduction of networked systems with H2-optimal
/// edge weights.
///
/// Exit codes: 0 success, 1 I/O, 2 usage, 3 parse, 4 connectivity,
/// 5 solver, 6 admissibility, 7 configuration. The solver tolerance can be
/// overridden with the NETRED_SOLVER_TOL environment variable.
#[derive(Debug, Parser)]
#[command(name = "netred", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a preset or random graph.
    Gen(GenArgs),
    /// Compute the masses that balance a graph.
    Balance(BalanceArgs),
    /// Initial quotient weights from the clustering-based projection.
    Project(ProjectArgs),
    /// Optimize the quotient weights and write the reduced model.
    Reduce(ReduceArgs),
    /// H2 error of the reduced model for given quotient weights.
    Evaluate(EvaluateArgs),
    /// Run the optimizer on seeded random instances.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// The six-vertex example network.
    Paper6,
    /// Balanced: a Hamiltonian cycle plus `--extra` random cycles.
    RandomBalanced,
    /// Generally unbalanced: a Hamiltonian cycle plus up to `--extra` edges.
    RandomUnbalanced,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(value_enum)]
    preset: Preset,
    /// Number of vertices of a random graph.
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Extra cycles (balanced) or edges (unbalanced) of a random graph.
    #[arg(long, default_value_t = 3)]
    extra: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Graph file to write; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a clustering here: the example clustering for `paper6`,
    /// a random one with `--num-clusters` clusters otherwise.
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    num_clusters: usize,
}

#[derive(Debug, Args)]
struct BalanceArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct OptimizerArgs {
    #[arg(long, default_value_t = 1e-5)]
    delta_hat: f64,
    /// Stop once consecutive objectives differ by at most this much.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Lower bound on every quotient weight (default 1e-6 times the largest
    /// initial weight).
    #[arg(long)]
    w_min: Option<f64>,
    /// Keep iterating on a flat objective while the error still drops.
    #[arg(long)]
    continue_on_flat: bool,
}

impl OptimizerArgs {
    fn settings(&self) -> Result<OptimizerSettings, CliError> {
        let s = OptimizerSettings {
            delta_hat: self.delta_hat,
            tol: self.tol,
            max_iter: self.max_iter,
            w_min: self.w_min,
            continue_on_flat_objective: self.continue_on_flat,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    /// Starting quotient weights; the projection weights if omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Reduced model file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Iteration trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    opt: OptimizerArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Instance `k` uses seed `seed + k`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 6)]
    n_min: usize,
    #[arg(long, default_value_t = 12)]
    n_max: usize,
    #[arg(long, default_value_t = 3)]
    clusters_min: usize,
    #[arg(long, default_value_t = 5)]
    clusters_max: usize,
    /// Use unbalanced random graphs.
    #[arg(long)]
    unbalanced: bool,
    /// Results (CSV); stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opt: OptimizerArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Balance(a) => commands::balance(&a),
        Command::Project(a) => commands::project(&a),
        Command::Reduce(a) => commands::reduce(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Bench(a) => commands::bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netred: {e}");
            e.exit_code()
        }
    }
}
