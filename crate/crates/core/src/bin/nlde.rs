use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nlde_graph::commands::{run, EXIT_CONFIG};
use nlde_graph::config::{Command, RunConfig};

/// Nonlinear Dirac equation on star graphs.
#[derive(Parser)]
#[command(name = "nlde", version)]
struct Cli {
    #[command(subcommand)]
    command: Verb,
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random test vectors, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Closed-form soliton profile and constants.
    Soliton,
    /// Time evolution with conservation diagnostics.
    Evolve,
    /// Standing-wave branch by continuation.
    Branch,
    /// Nonrelativistic-limit sweep over c.
    Nonrel,
    /// Closed-form resolvent and factorization checks.
    ResolventCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    if let Some(s) = cli.seed {
        cfg.rng_seed = s;
    }
    let cmd = match cli.command {
        Verb::Soliton => Command::Soliton,
        Verb::Evolve => Command::Evolve,
        Verb::Branch => Command::Branch,
        Verb::Nonrel => Command::Nonrel,
        Verb::ResolventCheck => Command::ResolventCheck,
    };
    let outcome = run(cmd, &cfg, cli.verbose);
    if let Some(m) = &outcome.message {
        eprintln!("{}: {m}", if outcome.code == 0 { "note" } else { "error" });
    }
    if cli.verbose {
        for f in &outcome.files {
            println!("{}", f.display());
        }
    }
    ExitCode::from(outcome.code as u8)
}
