use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use momtour_core::experiment::{compare_methods, run_experiment, ExperimentConfig};
use momtour_core::meanwidth::{gaussian_mean_width_mc, mean_width_bound};
use momtour_core::Error;

#[derive(Parser, Debug)]
#[command(name = "momtour", version, about = "Median-of-means tournament experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every trial described by a TOML config and write the CSV files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads. Output does not depend on it.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Put several summary.csv files side by side.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo oracles.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
}

#[derive(Subcommand, Debug)]
enum Oracle {
    /// Gaussian mean width of the intersection of rho*B1 and r*B2.
    Meanwidth {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run { config, seed, out, parallel } => {
            let cfg = ExperimentConfig::load(&config)?;
            let output = run_experiment(&cfg, seed, &out, parallel)?;
            for f in &output.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Compare { inputs, out } => {
            compare_methods(&inputs, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Oracle {
            which: Oracle::Meanwidth { d, rho, r, samples, seed },
        } => {
            let w = gaussian_mean_width_mc(d, rho, r, samples, seed)?;
            println!("mean_width={w:.6} bound={:.6}", mean_width_bound(rho, r, d));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
