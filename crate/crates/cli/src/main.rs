use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

mod config;
mod error;
mod experiments;
mod output;

use config::{Experiment, ExperimentConfig, Format};
use error::CliError;

#[derive(Parser)]
#[command(name = "collapsim", version, about = "Run collapse-model experiments from config files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fair-coin gambler's ruin games and the ruin probability.
    Ruin(RunArgs),
    /// Fokker-Planck evolution of the purse density.
    Diffusion(RunArgs),
    /// Spontaneous-localization hits.
    Grw(RunArgs),
    /// Continuous spontaneous localization.
    Csl(RunArgs),
    /// Particle-number stuff in a region.
    Stuff(RunArgs),
    /// Flow balance of stuff under the field.
    Flow(RunArgs),
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the file's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the file's `format`.
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
}

fn read_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(CliError::Config)
}

/// Every diagnostic for the file, schema and semantics alike.
fn diagnose(path: &Path) -> Result<Vec<String>, CliError> {
    match read_config(path) {
        Ok(cfg) => Ok(experiments::plan(&cfg).err().unwrap_or_default()),
        Err(CliError::Config(d)) => Ok(d),
        Err(e) => Err(e),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var("COLLAPSIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => n.max(1),
            Err(_) => return Err(CliError::config(format!("COLLAPSIM_THREADS must be a non-negative integer, got `{v}`"))),
        },
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start the worker pool: {e}")))
}

fn run(experiment: Experiment, args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = read_config(&args.config)?;
    if cfg.experiment != experiment {
        return Err(CliError::config(format!(
            "config is for `{}` but the `{experiment}` command was given",
            cfg.experiment
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(f) = &args.format {
        cfg.format = f.parse::<Format>().map_err(CliError::config)?;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("results/{}_{}", cfg.experiment, cfg.mode)));
    let plan = experiments::plan(&cfg).map_err(CliError::Config)?;

    let start = Instant::now();
    let run = thread_pool()?.install(|| experiments::execute(&plan, cfg.seed))?;
    let files = output::write_run(&out_dir, &cfg, cfg.format, &run, start.elapsed().as_secs_f64())?;
    for s in &run.stats {
        match s.stderr {
            Some(se) => println!("{} = {} ± {}", s.name, s.value, se),
            None => println!("{} = {}", s.name, s.value),
        }
    }
    println!("wrote {} files to {}", files.len(), out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let experiment = match &cli.command {
        Command::Validate { config } => {
            return match diagnose(config) {
                Ok(d) if d.is_empty() => {
                    println!("{}: ok", config.display());
                    ExitCode::SUCCESS
                }
                Ok(d) => {
                    for line in &d {
                        println!("{}: {line}", config.display());
                    }
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            };
        }
        Command::Ruin(a) => (Experiment::Ruin, a),
        Command::Diffusion(a) => (Experiment::Diffusion, a),
        Command::Grw(a) => (Experiment::Grw, a),
        Command::Csl(a) => (Experiment::Csl, a),
        Command::Stuff(a) => (Experiment::Stuff, a),
        Command::Flow(a) => (Experiment::Flow, a),
    };
    match run(experiment.0, experiment.1) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
