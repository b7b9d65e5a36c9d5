use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qvix_cli::{emit_report, run_experiment, run_oracle, ExperimentConfig};

#[derive(Parser)]
#[command(name = "qvix", version, about = "Extremal QVI solutions and their sensitivities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write reports.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the sampled Lipschitz estimate.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse and validate a config file.
    Validate { config: PathBuf },
    /// Cross-check every VI solve against the enumeration oracle (small grids only).
    Oracle { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("QVIX_LOG", "warn")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { config, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("qvix_out"));
            let artifacts = run_experiment(&cfg, seed)?;
            for path in emit_report(&artifacts, &dir)? {
                println!("wrote {}", path.display());
            }
            let summary = &artifacts.summary;
            for check in summary.checks.iter().filter(|c| !c.passed) {
                eprintln!("failed: {} {}", check.name, check.detail);
            }
            if summary.passed {
                println!("all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!(
                "ok: {} map, {} nodes, run {:?}",
                cfg.map.kind(),
                cfg.grid.n_nodes,
                cfg.run
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let checks = run_oracle(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&checks)?);
            if checks.iter().all(|c| c.passed) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}
