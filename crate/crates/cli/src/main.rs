mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use llot_core::selftest::SEED;

#[derive(Parser, Debug)]
#[command(name = "llot", version, about = "Regularized transport plans, fermionic mixed states and Coulomb MMOT")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build P_ε from a plan and check marginal, kinetic and potential bounds.
    Regularize(RegularizeArgs),
    /// Trace, density, diagonal, kinetic and positivity checks of Γ_ε.
    QuantumCheck(QuantumArgs),
    /// Solve the Coulomb multi-marginal transport problem.
    Mmot(MmotArgs),
    /// Sweep the semiclassical parameter η and record the energy gap.
    Sweep(SweepArgs),
    /// Run the property suite on the built-in instances.
    Selftest(SelftestArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Density integrates to 1.
    Probability,
    /// Density integrates to the particle number N.
    ParticleNumber,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Marginal,
    Kinetic,
    Potential,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Lp,
    Sinkhorn,
}

#[derive(Args, Debug, Serialize)]
pub struct InputArgs {
    /// Plan JSON: {"n": N, "dim": d, "atoms": [{"x": [[..], ..], "w": w}]}.
    #[arg(long)]
    pub plan: PathBuf,
    /// Density CSV with header x,value (or x,y,value / x,y,z,value).
    #[arg(long)]
    pub density: PathBuf,
    /// Mollifier width.
    #[arg(long)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Convention::Probability)]
    pub convention: Convention,
}

#[derive(Args, Debug, Serialize)]
pub struct RegularizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated subset of marginal,kinetic,potential.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [CheckKind::Marginal, CheckKind::Kinetic, CheckKind::Potential])]
    pub checks: Vec<CheckKind>,
    /// Report path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct QuantumArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Configurations sampled for the diagonal identity.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Random test vectors for the positivity check.
    #[arg(long, default_value_t = 100)]
    pub positivity_samples: usize,
    #[arg(long, default_value_t = SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct MmotArgs {
    #[arg(long)]
    pub density: PathBuf,
    /// Number of particles.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Solver::Lp)]
    pub solver: Solver,
    /// Inverse temperature of the entropic solver.
    #[arg(long, default_value_t = 200.0)]
    pub beta: f64,
    /// Marginal residual at which Sinkhorn stops.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 500_000)]
    pub max_iter: usize,
    /// Exponential-domain Sinkhorn (refused above beta = 50).
    #[arg(long)]
    pub plain: bool,
    /// Start Sinkhorn directly at the target beta.
    #[arg(long)]
    pub no_anneal: bool,
    /// Seed for sampled dual checks on large instances.
    #[arg(long, default_value_t = SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Convention::Probability)]
    pub convention: Convention,
    /// Plan JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report JSON output (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub density: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// `lo:hi:count` (log-spaced) or a comma-separated list.
    #[arg(long, default_value = "1e-4:1e-1:10")]
    pub etas: String,
    #[arg(long, value_enum, default_value_t = Convention::Probability)]
    pub convention: Convention,
    /// CSV output: eta,eps_opt,e_ot,trial_total,gap,assembled_C.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SelftestArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
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
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Regularize(a) => commands::regularize(a, cli.threads),
        Command::QuantumCheck(a) => commands::quantum_check(a, cli.threads),
        Command::Mmot(a) => commands::mmot(a, cli.threads),
        Command::Sweep(a) => commands::sweep(a, cli.threads),
        Command::Selftest(a) => commands::selftest(a, cli.threads),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
