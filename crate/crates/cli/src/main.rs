//! `rcmlab`: runs the laboratory pipelines from a JSON experiment config.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rcmlab_core::RcmError;

use commands::Outcome;
use config::ExperimentConfig;
use output::{Meta, Sink, VERSION};

#[derive(Parser)]
#[command(
    name = "rcmlab",
    version,
    about = "Random conductance model laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an environment and write it in binary form.
    Env(Common),
    /// Heat kernel slices as CSV.
    Heat(Common),
    /// Fit Gaussian envelopes and verify them on an independent field.
    Verify(Common),
    /// Chaining plan and chained lower bound.
    Chain(Common),
    /// Rectangle moment ladder, association and mixing diagnostics.
    Moments(Common),
    /// Green kernel estimates (d >= 3).
    Green(Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, env = "RCMLAB_THREADS")]
    threads: Option<usize>,
}

type Runner = fn(&ExperimentConfig, &mut Sink) -> rcmlab_core::Result<Outcome>;

fn exit_code(e: &RcmError) -> u8 {
    match e {
        RcmError::Io(_) => 4,
        RcmError::EnvelopeVerification(_) => 2,
        _ => 3,
    }
}

fn run(name: &str, runner: Runner, args: Common) -> Result<Outcome, RcmError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    let meta = Meta {
        tool: "rcmlab",
        version: VERSION,
        command: name.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| RcmError::Precondition(format!("thread pool: {e}")))?;
    let mut sink = Sink::new(&cfg.out_dir(), meta)?;
    let outcome = pool.install(|| runner(&cfg, &mut sink))?;
    for p in &sink.written {
        eprintln!("wrote {}", p.display());
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, runner, args): (&str, Runner, Common) = match cli.command {
        Command::Env(a) => ("env", commands::env, a),
        Command::Heat(a) => ("heat", commands::heat, a),
        Command::Verify(a) => ("verify", commands::verify, a),
        Command::Chain(a) => ("chain", commands::chain, a),
        Command::Moments(a) => ("moments", commands::moments, a),
        Command::Green(a) => ("green", commands::green, a),
    };
    match run(name, runner, args) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violations(n)) => {
            eprintln!("{name}: {n} violation(s)");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
