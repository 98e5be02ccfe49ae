use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

mod commands;
mod output;
mod settings;

use commands::ValidateOptions;
use settings::Experiment;

/// Energy harvesting experiments for cell-free massive MIMO.
#[derive(Parser)]
#[command(name = "cfeh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Coherence intervals per topology.
    #[arg(long)]
    intervals: Option<usize>,
    /// Independent topology drops per configuration.
    #[arg(long)]
    topologies: Option<usize>,
    /// Reuse a saved `topology.json` instead of drawing a new drop.
    #[arg(long)]
    topology_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the `[system]` configuration.
    Simulate(RunArgs),
    /// Simulate every point of the `[sweep]` section.
    Sweep(RunArgs),
    /// Recompute fits, transitions and state distributions from stored samples.
    Analyze {
        /// Output directory of an earlier `simulate` run.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the closed-form moments against sampling oracles.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long, hide = true)]
        corrupt_term: Option<String>,
        #[arg(long, hide = true, default_value_t = 1.5)]
        corrupt_factor: f64,
    },
}

fn load(path: Option<&PathBuf>) -> Result<Experiment> {
    match path {
        Some(p) => Experiment::load(p),
        None => Ok(Experiment::default()),
    }
}

fn apply_common(exp: &mut Experiment, c: &Common) {
    if let Some(s) = c.seed {
        exp.system.seed = s;
    }
    if let Some(w) = c.workers {
        exp.workers = w;
    }
}

fn prepare(args: &RunArgs) -> Result<Experiment> {
    let mut exp = load(args.common.config.as_ref())?;
    apply_common(&mut exp, &args.common);
    if let Some(n) = args.intervals {
        exp.intervals = n;
    }
    if let Some(n) = args.topologies {
        exp.topologies = n;
    }
    exp.validate()?;
    Ok(exp)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(args) => {
            let exp = prepare(&args)?;
            commands::cmd_simulate(&exp, args.topology_file.as_deref(), &args.common.out)?;
        }
        Command::Sweep(args) => {
            if args.topology_file.is_some() {
                bail!("--topology-file applies to `simulate` only; sweep points differ in their AP layout");
            }
            let exp = prepare(&args)?;
            commands::cmd_sweep(&exp, &args.common.out)?;
        }
        Command::Analyze { input, config, out } => {
            let exp = load(config.as_ref())?;
            exp.validate()?;
            commands::cmd_analyze(&exp, &input, out.as_ref().unwrap_or(&input))?;
        }
        Command::Validate {
            common,
            instances,
            draws,
            corrupt_term,
            corrupt_factor,
        } => {
            let mut exp = load(common.config.as_ref())?;
            apply_common(&mut exp, &common);
            if let Some(n) = instances {
                exp.validation.instances = n;
            }
            if let Some(n) = draws {
                exp.validation.draws = n;
            }
            exp.validate()?;
            let opts = ValidateOptions {
                corrupt_term,
                corrupt_factor,
            };
            return commands::cmd_validate(&exp, &opts, &common.out);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
