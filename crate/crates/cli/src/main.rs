//! `nlsred`: command-line driver for the concentration toolkit.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlsred::landscape::Convention;

use crate::commands::{CliError, Context};
use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "nlsred", version, about = "Semiclassical standing waves by finite-dimensional reduction")]
struct Cli {
    /// JSON run configuration; built-in defaults when absent.
    #[arg(long, global = true, env = "NLSR_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` in the config.
    #[arg(long, global = true, env = "NLSR_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true, env = "NLSR_THREADS")]
    threads: Option<usize>,
    /// `derived` or `paper-literal`, overriding the config.
    #[arg(long, global = true, env = "NLSR_CONVENTION")]
    convention: Option<Convention>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Radial ground state: profile CSV and metadata.
    Ground,
    /// Critical points of Λ and their manifolds.
    Landscape,
    /// Reduced functional along the ε ladder at the slow point.
    Reduce,
    /// Full Newton solutions at the first ε, one per seed.
    Solve,
    /// Newton solutions over the whole ladder with peak tracking.
    Sweep,
    /// Built-in numerical self-checks.
    Check,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ground => "ground",
            Command::Landscape => "landscape",
            Command::Reduce => "reduce",
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Check => "check",
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = cli.convention {
        cfg.convention = c;
    }
    if let Some(dir) = &cli.out {
        cfg.output_dir = Some(dir.clone());
    }
    cfg.validate(!matches!(cli.command, Command::Ground))?;
    if let Some(t) = cli.threads {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let out_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("nlsred-out"));
    let mut ctx = Context::new(cfg, &out_dir, cli.command.name())?;
    let ok = match cli.command {
        Command::Ground => commands::ground(&mut ctx)?,
        Command::Landscape => commands::landscape(&mut ctx)?,
        Command::Reduce => commands::reduce(&mut ctx)?,
        Command::Solve => commands::solve(&mut ctx)?,
        Command::Sweep => commands::sweep(&mut ctx)?,
        Command::Check => commands::check(&mut ctx)?,
    };
    for path in &ctx.sink.written {
        println!("{}", path.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
