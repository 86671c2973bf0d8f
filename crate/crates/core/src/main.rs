use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reactodiff::harness::{emit_report, run_experiment, ExperimentConfig, CONFIG_SCHEMA};

#[derive(Parser)]
#[command(name = "reactodiff", version, about = "Reaction-diffusion experiment runner")]
struct Cli {
    /// Worker threads; 1 is the reference (sequential) mode.
    #[arg(long, global = true, env = "REACTODIFF_THREADS", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json plus CSV tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides run.master_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the JSON schema of the config format.
    Schema,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> reactodiff::Result<bool> {
    match cli.command {
        Command::Schema => {
            print!("{CONFIG_SCHEMA}");
            Ok(true)
        }
        Command::Validate { config } => {
            ExperimentConfig::load(&config)?;
            println!("{}: ok", config.display());
            Ok(true)
        }
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.run.master_seed = seed;
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cli.threads.max(1))
                .build()
                .expect("thread pool");
            let bundle = pool.install(|| run_experiment(&cfg))?;
            emit_report(&bundle, &out)?;
            for a in &bundle.audits {
                println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            println!("report written to {}", out.join("report.json").display());
            Ok(bundle.passed())
        }
    }
}
