use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use dpfl_core::harness::{
    record_trace, render_report, resolve_output_root, run_experiment, run_matrix,
    ExperimentConfig, OUTPUT_ROOT_ENV,
};

/// Deterministic desk-scale simulator for federated learning under
/// dynamic client participation.
#[derive(Parser)]
#[command(name = "dpfl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment cell described by a TOML config.
    Run(RunArgs),
    /// Run every cell of the config's matrix section.
    Matrix(MatrixArgs),
    /// Record or replay participation traces.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Render a text report from a directory of finished runs.
    Report {
        /// Directory to scan for aggregate.json files.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    config: PathBuf,
    /// Extra seed, appended to the config's list; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output root; takes precedence over DPFL_OUTPUT_ROOT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// TOML experiment configuration with a [matrix] section.
    config: PathBuf,
    /// Output root; takes precedence over DPFL_OUTPUT_ROOT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Sample the configured participation model and write a trace CSV.
    Record(RecordArgs),
    /// Run the config with participation replayed from a trace CSV.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RecordArgs {
    /// TOML experiment configuration.
    config: PathBuf,
    /// Where to write the trace CSV.
    #[arg(long)]
    out: PathBuf,
    /// Seed to sample with; defaults to the config's first seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Rounds to record; defaults to the config's round count.
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    /// TOML experiment configuration.
    config: PathBuf,
    /// Trace CSV to replay; overrides the config's participation section.
    #[arg(long)]
    trace: PathBuf,
    /// Output root; takes precedence over DPFL_OUTPUT_ROOT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output_root(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    let env = std::env::var_os(OUTPUT_ROOT_ENV);
    resolve_output_root(flag, env.as_deref(), &cfg.output_dir)
}

fn run(cli: Cli) -> dpfl_core::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = ExperimentConfig::load(&args.config)?;
            cfg.seeds.extend(args.seeds);
            let mut seen = BTreeSet::new();
            cfg.seeds.retain(|s| seen.insert(*s));
            let root = output_root(args.out.as_deref(), &cfg);
            let outcome = run_experiment(&cfg, &root)?;
            println!("{}", outcome.dir.display());
        }
        Command::Matrix(args) => {
            let cfg = ExperimentConfig::load(&args.config)?;
            let root = output_root(args.out.as_deref(), &cfg);
            let outcomes = run_matrix(&cfg, &root)?;
            println!(
                "{} cells -> {}",
                outcomes.len(),
                root.join(&cfg.name).display()
            );
        }
        Command::Trace { command } => match command {
            TraceCommand::Record(args) => {
                let cfg = ExperimentConfig::load(&args.config)?;
                let seed = args.seed.unwrap_or(cfg.seeds[0]);
                let rounds = args.rounds.unwrap_or(cfg.rounds);
                let trace = record_trace(&cfg, seed, rounds)?;
                trace.write_csv(&args.out)?;
                println!("{}", args.out.display());
            }
            TraceCommand::Replay(args) => {
                let mut cfg = ExperimentConfig::load(&args.config)?;
                cfg.participation.model = "programmed".into();
                cfg.participation.trace_path = Some(args.trace);
                let root = output_root(args.out.as_deref(), &cfg);
                let outcome = run_experiment(&cfg, &root)?;
                println!("{}", outcome.dir.display());
            }
        },
        Command::Report { dir } => {
            print!("{}", render_report(&dir)?);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
