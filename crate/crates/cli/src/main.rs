use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use annealctl::commands;
use annealctl::{CliError, ExperimentConfig, Kind};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Drt,
    Slowflow,
    Statics,
    Compare,
}

#[derive(Debug, Parser)]
#[command(name = "annealctl", version, about = "Trotter Glauber simulations and closed macroscopic flows")]
struct Args {
    command: Command,
    /// Configuration file (flat `section.key = value` lines)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides output.dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides run.seeds
    #[arg(long)]
    seeds: Option<String>,
    /// Also integrate the approximate slow flow
    #[arg(long)]
    approx: bool,
    /// Read --config as JSON (a manifest is accepted too)
    #[arg(long)]
    json_config: bool,
}

fn execute(args: &Args) -> Result<String, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config, args.json_config)?;
    if let Some(out) = &args.out {
        cfg.set("output.dir", &out.to_string_lossy())?;
    }
    if let Some(seeds) = &args.seeds {
        cfg.set("run.seeds", seeds)?;
    }
    let requested = match args.command {
        Command::Simulate => Kind::Simulate,
        Command::Drt => Kind::Drt,
        Command::Slowflow => Kind::Slowflow,
        Command::Statics => Kind::Statics,
        Command::Compare => Kind::Compare,
    };
    if let Some(kind) = cfg.run.kind {
        if kind != requested {
            eprintln!("note: run.kind = {kind:?} in config; running {requested:?} as requested");
        }
    }
    let dir = cfg.output.dir.display().to_string();
    Ok(match requested {
        Kind::Simulate => format!("{} trajectories written to {dir}", commands::simulate(&cfg)?.len()),
        Kind::Drt => format!("{} flow curves written to {dir}", commands::drt(&cfg)?.len()),
        Kind::Slowflow => format!("{} flow curves written to {dir}", commands::slowflow(&cfg, args.approx)?.len()),
        Kind::Statics => {
            let r = commands::statics(&cfg)?;
            format!("m = {} (f = {}), report in {dir}/statics.json", r.m, r.f)
        }
        Kind::Compare => {
            let s = commands::compare(&cfg)?;
            let mut lines = Vec::new();
            for p in &s.per_m {
                lines.push(format!("M = {}: sup|sim - theory| = {:.4}, sup|sim - approx| = {:.4}", p.slices, p.sup_theory, p.sup_approx));
            }
            lines.push(format!("collapse = {:.4}", s.collapse));
            lines.join("\n")
        }
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(msg) => {
            let _ = writeln!(std::io::stdout(), "{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
