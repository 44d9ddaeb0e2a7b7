use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::commands::{self, TestOverrides};
use crate::config::{load_config, QuantileSpec};
use crate::error::CliResult;
use crate::exec::thread_pool;

#[derive(Debug, Parser)]
#[command(name = "hmm-mee", version, about = "Maximum-entropy estimation for hidden Markov models")]
pub struct Cli {
    /// Worker threads (default: HMM_MEE_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a signal sequence from the configured model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the parameter from a signal sequence.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fisher information, long-run covariance and bounds at the configured parameter.
    Asymptotics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative-entropy test of the configured parameter against a sequence.
    Test {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        quantile_method: Option<QuantileSpec>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a numbered example end to end.
    Paper {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
        /// Replace the built-in configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(out: Option<PathBuf>, configured: Option<&Path>) -> PathBuf {
    out.or_else(|| configured.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out"))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let pool = thread_pool(cli.threads)?;
    pool.install(|| match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = load_config(&config)?;
            let out = out_dir(out, cfg.config.output.as_deref());
            commands::cmd_simulate(&cfg, seed, &out)
        }
        Command::Estimate { config, data, out } => {
            let cfg = load_config(&config)?;
            let out = out_dir(out, cfg.config.output.as_deref());
            commands::cmd_estimate(&cfg, &data, &out)
        }
        Command::Asymptotics { config, out } => {
            let cfg = load_config(&config)?;
            let out = out_dir(out, cfg.config.output.as_deref());
            commands::cmd_asymptotics(&cfg, &out)
        }
        Command::Test { config, data, alpha, quantile_method, seed, out } => {
            let cfg = load_config(&config)?;
            let out = out_dir(out, cfg.config.output.as_deref());
            commands::cmd_test(&cfg, &data, &TestOverrides { alpha, method: quantile_method, seed }, &out)
        }
        Command::Paper { example, config, seed, out } => {
            commands::cmd_paper(example, config.as_deref(), seed, &out_dir(out, None))
        }
    })
}
