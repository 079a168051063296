use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sidlab::harness::{run_experiment, validate_config, with_workers, ExperimentConfig};

#[derive(Parser)]
#[command(name = "sidlab", version, about = "Reproducible experiments on self-interacting diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run {
        config: PathBuf,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long, env = "SIDLAB_WORKERS")]
        workers: Option<usize>,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and its step budget without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> sidlab::Result<ExitCode> {
    match cli.command {
        Command::Validate { config } => {
            let c = ExperimentConfig::from_path(&config)?;
            let v = validate_config(&c)?;
            println!(
                "{}: valid {} experiment, about {:.3e} Euler steps (budget {:.3e})",
                config.display(),
                c.experiment.tag(),
                v.estimated_steps,
                c.step_budget
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, workers, out } => {
            let c = ExperimentConfig::from_path(&config)?;
            let out = out
                .or_else(|| c.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("sidlab-out").join(c.experiment.tag()));
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let manifest = with_workers(workers, || run_experiment(&c, &out))??;
            print!("{}", std::fs::read_to_string(out.join("report.txt")).unwrap_or_default());
            println!(
                "wrote {} files to {} in {:.2}s",
                manifest.outputs.len() + 1,
                out.display(),
                manifest.wall_clock_seconds
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
