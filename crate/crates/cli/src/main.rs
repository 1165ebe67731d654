use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hotgp_cli::{sweep, Exit, TrainArgs};

#[derive(Parser)]
#[command(name = "hotgp", version, about = "Optimistic model-based RL with joint reward-dynamics models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=hotgp::config::MAX_SEED))]
        seed: Option<u64>,
        /// Run directory (default: $HOTGP_RUN_ROOT/<env>_<strategy>_seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key=value`, applied after the file; repeatable.
        #[arg(long = "override", value_name = "KEY=VAL")]
        overrides: Vec<String>,
        /// Continue the run in this directory from its latest checkpoint.
        #[arg(long, conflicts_with_all = ["config", "seed", "out", "overrides"])]
        resume: Option<PathBuf>,
    },
    /// One run per seed as separate processes, then aggregate.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive range `a..b`.
        #[arg(long, default_value = "0..4")]
        seeds: String,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VAL")]
        overrides: Vec<String>,
    },
    /// Learning curves of run or sweep directories as SVG.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the numerical oracle suites.
    Selftest {
        /// Only these suites.
        #[arg(long)]
        suite: Vec<String>,
    },
}

fn dispatch(cmd: Cmd) -> anyhow::Result<ExitCode> {
    match cmd {
        Cmd::Train { resume: Some(dir), .. } => {
            let dir = hotgp_cli::resume(&dir)?;
            println!("{}", dir.display());
        }
        Cmd::Train { config, seed, out, overrides, resume: None } => {
            let config = config.ok_or_else(|| Exit::new(2, "--config is required"))?;
            let dir = hotgp_cli::train(&TrainArgs { config, seed, out, overrides })?;
            println!("{}", dir.display());
        }
        Cmd::Sweep { config, seeds, parallel, out, overrides } => {
            let args = sweep::SweepArgs { config, seeds: sweep::parse_seeds(&seeds)?, parallel, out, overrides };
            let report = sweep::sweep(&std::env::current_exe()?, &args)?;
            println!("{}", report.dir.join("aggregate.csv").display());
            if !report.failed.is_empty() {
                for (seed, msg) in &report.failed {
                    eprintln!("seed {seed} failed: {msg}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Plot { runs, out } => {
            hotgp_cli::plot::plot(&runs.iter().map(PathBuf::as_path).collect::<Vec<_>>(), &out)?;
            println!("{}", out.display());
        }
        Cmd::Selftest { suite } => {
            let failed = hotgp_cli::selftest(&suite, &mut std::io::stdout())?;
            if !failed.is_empty() {
                eprintln!("failing suites: {}", failed.join(", "));
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(exit) => ExitCode::from(exit.code),
                None => ExitCode::FAILURE,
            }
        }
    }
}
