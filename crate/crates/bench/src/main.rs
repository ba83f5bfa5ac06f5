use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use cvcim::instances::ConditionedSpec;
use cvcim_bench::config::{OracleBudget, DEFAULT_PERCENTILES};
use cvcim_bench::ratio::{cmd_ratio, RatioSide};
use cvcim_bench::{cmd_run, cmd_sweep, oracle, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "cvcim", version, about = "Run CV-CIM benchmark experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: machine parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Gap recording stride in roundtrips.
    #[arg(long)]
    stride: Option<usize>,
}

impl GridArgs {
    fn split(self) -> Result<(ExperimentConfig, Overrides)> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let over = Overrides { seed: self.seed, out: self.out, workers: self.workers, stride: self.stride };
        Ok((cfg, over))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an instance × policy × sample grid.
    Run(GridArgs),
    /// Run the κ × λ sweep on generated instances.
    Sweep(GridArgs),
    /// Compare percentile trajectories of two run directories.
    Ratio {
        #[arg(long)]
        a: PathBuf,
        /// Policy to take from `a` when it holds several.
        #[arg(long)]
        a_policy: Option<String>,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        b_policy: Option<String>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_PERCENTILES.to_vec())]
        percentiles: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute reference optima for instance files.
    Oracle {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        starts: usize,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a generated conditioned instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let (cfg, over) = args.split()?;
            cmd_run(cfg, &over)?;
        }
        Command::Sweep(args) => {
            let (cfg, over) = args.split()?;
            cmd_sweep(cfg, &over)?;
        }
        Command::Ratio { a, a_policy, b, b_policy, percentiles, out } => {
            let rows = cmd_ratio(
                &RatioSide { dir: a, policy: a_policy },
                &RatioSide { dir: b, policy: b_policy },
                &percentiles,
                &out,
            )?;
            log::info!("wrote {} ratios to {}", rows.len(), out.display());
        }
        Command::Oracle { files, starts, max_iters, seed, out, workers } => {
            let budget = OracleBudget { starts, max_iters };
            cvcim_bench::runner::with_workers(workers, || oracle::cmd_oracle(&files, &budget, seed, &out))??;
        }
        Command::Gen { n, kappa, seed, out } => {
            let path = oracle::cmd_gen(&ConditionedSpec { n, kappa, seed }, &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
