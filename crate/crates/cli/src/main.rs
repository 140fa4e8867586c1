//! `multichannel`: simulate, optimize and check competitive multi-channel
//! marketing campaigns.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::InputPaths;
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::output::Artifacts;

#[derive(Parser, Debug)]
#[command(name = "multichannel", version, about)]
struct Cli {
    /// Worker threads for Monte Carlo (results do not depend on it).
    #[arg(long, global = true, env = "MULTICHANNEL_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Model {
    /// Edge list: `src dst weight` per line.
    #[arg(long)]
    net: PathBuf,
    /// Similarities: `u v h` per line.
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Products: `id f1 .. fd null=<index>` per line.
    #[arg(long)]
    products: PathBuf,
    /// JSON array of channel plans.
    #[arg(long)]
    plans: Option<PathBuf>,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl Model {
    fn paths(&self) -> InputPaths {
        InputPaths {
            net: self.net.clone(),
            sim: self.sim.clone(),
            products: self.products.clone(),
            plans: self.plans.clone(),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate expected spreads by Monte Carlo.
    Simulate {
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u64>,
    },
    /// Cross-entropy budget allocation for one product against fixed plans.
    Optimize {
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        seed: Option<u64>,
        /// Replications per objective evaluation.
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        focal: Option<usize>,
    },
    /// Round-robin best responses for every product.
    BestResponse {
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u64>,
        /// Budget for every product.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Exact expected spread on a small instance.
    Oracle {
        #[command(flatten)]
        model: Model,
        /// Midpoint grid resolution; uniform thresholds when absent.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Check that social-ad gadgets fire only for friends who bought the
    /// advertised product.
    GadgetCheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in example instances.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> CliResult<FileConfig> {
    if let Some(p) = path {
        commands::require_paths([p.as_path()])?;
    }
    FileConfig::load(path.map(PathBuf::as_path))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let (artifacts, out): (Artifacts, PathBuf) = match cli.command {
        Command::Simulate { model, seed, reps } => {
            let cfg = load_config(model.config.as_ref())?;
            let inputs = commands::load_inputs(&model.paths())?;
            (commands::simulate(&inputs, &cfg, seed, reps)?, model.out)
        }
        Command::Optimize {
            model,
            seed,
            reps,
            budget,
            focal,
        } => {
            let cfg = load_config(model.config.as_ref())?;
            let inputs = commands::load_inputs(&model.paths())?;
            (commands::optimize(&inputs, &cfg, seed, reps, budget, focal)?, model.out)
        }
        Command::BestResponse {
            model,
            seed,
            reps,
            budget,
            rounds,
        } => {
            let cfg = load_config(model.config.as_ref())?;
            let inputs = commands::load_inputs(&model.paths())?;
            (commands::best_response(&inputs, &cfg, seed, reps, budget, rounds)?, model.out)
        }
        Command::Oracle { model, grid } => {
            let cfg = load_config(model.config.as_ref())?;
            let inputs = commands::load_inputs(&model.paths())?;
            (commands::oracle(&inputs, &cfg, grid)?, model.out)
        }
        Command::GadgetCheck {
            seed,
            trials,
            config,
            out,
        } => {
            let cfg = load_config(config.as_ref())?;
            (commands::gadget_check(&cfg, seed, trials)?, out)
        }
        Command::Fixtures { out } => (commands::fixtures(), out),
    };
    artifacts.write(&out)?;
    for name in artifacts.names() {
        println!("{}", out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
