//! `ekman`: run the experiments of the toolkit from a JSON config and write
//! deterministic CSV/JSON artifacts.

mod artifacts;
mod cache;
mod commands;
mod config;
mod error;
mod seeds;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::artifacts::Artifacts;
use crate::commands::Context;
use crate::config::Kind;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "ekman", version, about = "Rotating-fluid spectral experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(clap::Args)]
struct Flags {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides the config's `output_dir`.
    #[arg(long, global = true, env = "EKMAN_OUT_DIR")]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Ignore cached triad tables and rebuild them.
    #[arg(long, global = true)]
    rebuild_cache: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Eigenmode table and orthonormality report.
    Basis,
    /// Triad table and non-resonance audit.
    Resonance,
    /// H1/H2 report, F_α curves and σ_α convergence.
    ForcingCheck,
    /// Top-layer profiles, residuals and amplitude scaling.
    Layers,
    /// Pumping coefficients, surface source and S_θ convergence.
    Sources,
    /// Envelope equation trajectory.
    SolveEnvelope,
    /// Monte Carlo mean against the mean-limit decomposition.
    MeanLimit,
    /// Linear direct solve on the stretched vertical grid.
    SolveDirect,
    /// ε-convergence table of direct against envelope solutions.
    Compare,
}

impl Command {
    fn kind(self) -> Kind {
        match self {
            Command::Basis => Kind::Basis,
            Command::Resonance => Kind::Resonance,
            Command::ForcingCheck => Kind::ForcingCheck,
            Command::Layers => Kind::Layers,
            Command::Sources => Kind::Sources,
            Command::SolveEnvelope => Kind::SolveEnvelope,
            Command::MeanLimit => Kind::MeanLimit,
            Command::SolveDirect => Kind::SolveDirect,
            Command::Compare => Kind::Compare,
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let kind = cli.command.kind();
    let path = cli.flags.config.as_ref().ok_or_else(|| CliError::Config { path: String::new(), message: "--config is required".into() })?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config { path: String::new(), message: format!("cannot read {}: {e}", path.display()) })?;
    let cfg = config::parse(&text)?;
    cfg.check_kind(kind)?;
    if let Some(n) = cli.flags.threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = cli.flags.seed.unwrap_or(cfg.seed);
    let out = cli.flags.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));

    let config_hash: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let mut header: Vec<(String, String)> = seeds::describe(seed).into_iter().map(|(k, v)| (k, v.to_string())).collect();
    header.push(("config_sha256".into(), config_hash[..16].to_string()));
    let mut art = Artifacts::new(&out, kind.name(), header)?;
    let ctx = Context { cfg: &cfg, seed, out: &out, rebuild_cache: cli.flags.rebuild_cache };
    let summary = match cli.command {
        Command::Basis => commands::basis(&ctx, &mut art),
        Command::Resonance => commands::resonance(&ctx, &mut art),
        Command::ForcingCheck => commands::forcing_check(&ctx, &mut art),
        Command::Layers => commands::layers(&ctx, &mut art),
        Command::Sources => commands::sources(&ctx, &mut art),
        Command::SolveEnvelope => commands::solve_envelope(&ctx, &mut art),
        Command::MeanLimit => commands::mean_limit(&ctx, &mut art),
        Command::SolveDirect => commands::solve_direct(&ctx, &mut art),
        Command::Compare => commands::compare(&ctx, &mut art),
    }?;
    let dir = art.finish()?;
    Ok(format!("{}: {summary} -> {}", kind.name(), dir.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
