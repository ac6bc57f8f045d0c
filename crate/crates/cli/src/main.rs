//! `mwkb`: analysis and profile solves for multiphase boundary problems.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::Session;
use config::{Format, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mwkb",
    version,
    about = "Multiphase WKB profiles for hyperbolic boundary problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Lattice box radius.
    #[arg(long = "box", global = true, allow_negative_numbers = true)]
    box_radius: Option<i64>,
    /// Harmonic bound of the resonance search.
    #[arg(long, global = true)]
    harmonics: Option<i64>,
    /// Resonance tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads; rayon's default when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Record wall-clock timings in the reports.
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Characteristic identities, hyperbolicity and the velocity bound.
    Analyze,
    /// Structural assumptions on the boundary problem.
    Assumptions,
    /// Resonance table and frequency partition.
    Resonances,
    /// Interaction coefficients and, for Euler, the closed form.
    Gamma,
    /// Leading profile on the slow grid.
    Solve,
    /// Full bundle for the built-in Euler system.
    DemoEuler,
    /// Every check that needs no profile solve.
    Verify,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.box_radius {
        cfg.box_radius = v;
    }
    if let Some(v) = cli.harmonics {
        cfg.harmonic_bound = v;
    }
    if let Some(v) = cli.tol {
        cfg.res_tol = v;
    }
    if let Some(v) = cli.format {
        cfg.format = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = load(cli)?;
    let out = commands::default_out(&cfg);
    let mut s = Session::new(cfg, out, cli.timings)?;
    match cli.command {
        Command::Analyze => commands::analyze(&mut s),
        Command::Assumptions => commands::assumptions(&mut s),
        Command::Resonances => commands::resonances(&mut s),
        Command::Gamma => commands::gamma(&mut s),
        Command::Solve => commands::solve(&mut s),
        Command::DemoEuler => commands::demo_euler(&mut s),
        Command::Verify => commands::verify(&mut s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
