use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forge::error::Result;
use forge::experiment::{exit_code, run, Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "forge", version, about = "Network design and robust connectivity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate random connected graphs, one per seed.
    Gen(Common),
    /// Compare edge-addition strategies.
    Design(Common),
    /// Exact preventive game value per seed.
    Game(Common),
    /// Compare prevention algorithms against the exact value.
    Prevent(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(command: Command, args: Common) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply(&Overrides { seed: args.seed, k: args.k, t: args.t, out: args.out });
    run(&cfg.resolve(command)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = std::env::var("FORGE_THREADS").ok().and_then(|v| v.parse().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Gen(a) => (Command::Gen, a),
        Cmd::Design(a) => (Command::Design, a),
        Cmd::Game(a) => (Command::Game, a),
        Cmd::Prevent(a) => (Command::Prevent, a),
    };
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
