use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msfde_cli::demos::run_demo;
use msfde_cli::{load_config, run, CliError};

/// Mean-square stability analysis of perturbed linear stochastic delay equations.
#[derive(Parser)]
#[command(name = "msfde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses declared in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a bundled demo: scalar, pure-delay, chirp, spikes, constant-g.
    Demo {
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[cfg(feature = "parallel")]
fn configure_threads() {
    let threads = std::env::var("MSFDE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_threads() {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Run { config, out } => load_config(config).map_err(CliError::from).and_then(|cfg| run(&cfg, out)),
        Command::Demo { name, out } => run_demo(name, out),
    };
    match result {
        Ok(outputs) => {
            for f in &outputs.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("msfde: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
