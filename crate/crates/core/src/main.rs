use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparsebandit::cli::{self, Overrides, DEFAULT_STRIDE, PLOTDATA_FILE};

#[derive(Debug, Parser)]
#[command(name = "sparsebandit", version, about = "Sparsity-agnostic linear bandit experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write traces.csv, aggregate.csv and manifest.toml.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, alias = "T")]
        horizon: Option<u64>,
        /// Output directory; defaults to $SPARSEBANDIT_OUT, then ./results.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        shared_noise: Option<bool>,
    },
    /// Downsample a traces file into mean and ±1 std curves.
    Plotdata {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STRIDE)]
        stride: usize,
        /// Defaults to plotdata.csv next to the traces file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one SVG per sparsity level into this directory.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Check the numerical invariants on random instances.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> sparsebandit::Result<ExitCode> {
    match args.command {
        Command::Run {
            config,
            seed,
            reps,
            horizon,
            out,
            shared_noise,
        } => {
            let overrides = Overrides {
                seed,
                reps,
                horizon,
                out,
                shared_noise,
            };
            let files = cli::cmd_run(&config, &overrides)?;
            log::info!("wrote {}", files.dir.display());
        }
        Command::Plotdata {
            traces,
            stride,
            out,
            svg,
        } => {
            let out = out.unwrap_or_else(|| traces.with_file_name(PLOTDATA_FILE));
            let rows = cli::cmd_plotdata(&traces, stride, &out, svg.as_deref())?;
            log::info!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Selftest { seed, episodes } => {
            let report = cli::selftest(seed, episodes)?;
            let mut ok = true;
            for c in &report {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
