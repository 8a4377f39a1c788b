use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use dse_cli::commands::{self, RunAutoArgs};
use dse_cli::config::ServiceConfig;
use dse_core::design_space::CostRange;

#[derive(Parser)]
#[command(name = "dse", version, about = "LLM-driven design space exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session in automation mode until it exits.
    RunAuto(RunAutoArgs),
    /// Run an experiment file and write report.txt and rows.jsonl.
    RunExperiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the Pareto frontier (cost, perf, key), cheapest first.
    Frontier {
        #[arg(long)]
        dsdb: PathBuf,
        #[arg(long)]
        range: Option<CostRange>,
    },
    /// Evaluate every configuration of a space with the synthetic model.
    Populate {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        dsdb: PathBuf,
    },
    /// Write a compacted copy of a DSDB.
    ExportDsdb {
        #[arg(long)]
        dsdb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge records from another DSDB file.
    ImportDsdb {
        #[arg(long)]
        dsdb: PathBuf,
        #[arg(long)]
        from: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::RunAuto(args) => commands::run_auto(&args),
        Command::RunExperiment { spec, out } => {
            let n = commands::run_experiment(&spec, &out)?;
            eprintln!("{n} rows written to {}", out.display());
            Ok(0)
        }
        Command::Frontier { dsdb, range } => {
            commands::frontier(&dsdb, range, &mut std::io::stdout().lock())?;
            Ok(0)
        }
        Command::Populate { space, dsdb } => {
            let n = commands::populate(&space, &dsdb)?;
            eprintln!("{n} design points stored in {}", dsdb.display());
            Ok(0)
        }
        Command::ExportDsdb { dsdb, out } => {
            let n = commands::export_dsdb(&dsdb, &out)?;
            eprintln!("{n} records exported to {}", out.display());
            Ok(0)
        }
        Command::ImportDsdb { dsdb, from } => {
            let n = commands::import_dsdb(&dsdb, &from)?;
            eprintln!("{n} records imported into {}", dsdb.display());
            Ok(0)
        }
        Command::Serve { config, listen } => {
            let mut cfg = ServiceConfig::load(&config)?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            tokio::runtime::Runtime::new()?.block_on(dse_cli::server::serve(cfg))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
