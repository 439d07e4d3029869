use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use twistframe_cli::commands;
use twistframe_cli::config::{self, Overrides, RawConfig};

/// Analysis of twisted shift-invariant spaces: brackets and frame bounds,
/// Parseval generators, orthogonal decompositions, frame operators and
/// twisted shift-preserving operator checks.
#[derive(Parser)]
#[command(name = "twistframe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML). All values have defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Probe seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Lattice truncation radius (overrides the config).
    #[arg(long, global = true)]
    kmax: Option<usize>,

    /// Samples per unit length N (overrides the config).
    #[arg(long = "grid-n", global = true)]
    grid_n: Option<u32>,

    /// Box half-width L (overrides the config).
    #[arg(long = "grid-l", global = true)]
    grid_l: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Bracket tables, frame bounds and the translate-Gram cross-check.
    Analyze,
    /// Construct Parseval generators and verify them.
    Parsevalize,
    /// Orthogonal Parseval decomposition of the generator family.
    Decompose,
    /// Frame operator and inverse against the dual Gramian.
    Frameop,
    /// Commutation residual and property transfer for an operator.
    #[command(name = "verify-tsp")]
    VerifyTsp,
    /// Reproduce the multiplication-operator range table.
    #[command(name = "demo-mult")]
    DemoMult,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        output_dir: cli.out.clone(),
        seed: cli.seed,
        kmax: cli.kmax,
        grid_samples: cli.grid_n,
        grid_half_width: cli.grid_l,
    };
    let cfg = match &cli.config {
        Some(path) => config::load(path, &overrides),
        None => config::resolve(RawConfig::default(), &overrides),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Analyze => commands::cmd_analyze(&cfg),
        Command::Parsevalize => commands::cmd_parsevalize(&cfg),
        Command::Decompose => commands::cmd_decompose(&cfg),
        Command::Frameop => commands::cmd_frameop(&cfg),
        Command::VerifyTsp => commands::cmd_verify_tsp(&cfg),
        Command::DemoMult => commands::cmd_demo_mult(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
