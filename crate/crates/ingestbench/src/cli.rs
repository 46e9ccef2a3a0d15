//! Command-line entry points: `run`, `report` and `export`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::bench::{self, BenchError};
use crate::clock::TimeMode;

#[derive(Parser)]
#[command(
    name = "ingestbench",
    version,
    about = "Deterministic message-broker ingestion benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one benchmark run from a config file.
    Run {
        /// Run configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (series/, summary.tsv, config.echo, run.meta).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Clock mode override: virtual or realtime.
        #[arg(long)]
        mode: Option<String>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge finished run directories into one report.
    Report {
        /// Run output directories.
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Also write the machine-readable TSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one exported metric series as TSV.
    Export {
        /// Run output directory.
        #[arg(long)]
        run: PathBuf,
        /// Metric path, e.g. the MessagesInPerSec one-minute rate.
        #[arg(long)]
        metric: String,
    },
}

/// Run the CLI; returns the process exit code (0 ok, 2 config, 3 runtime).
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Run {
            config,
            out,
            mode,
            seed,
        } => cmd_run(config, out, mode, seed),
        Command::Report { runs, out } => cmd_report(runs, out),
        Command::Export { run, metric } => cmd_export(run, metric),
    }
}

fn cmd_run(
    config_path: PathBuf,
    out: Option<PathBuf>,
    mode: Option<String>,
    seed: Option<u64>,
) -> Result<(), BenchError> {
    let text = std::fs::read_to_string(&config_path).map_err(|e| BenchError::TypeMismatch {
        line: 0,
        message: format!("cannot read config {}: {e}", config_path.display()),
    })?;
    let mode = match mode {
        Some(m) => Some(TimeMode::parse(&m).ok_or(BenchError::TypeMismatch {
            line: 0,
            message: format!("--mode is virtual or realtime, got `{m}`"),
        })?),
        None => None,
    };
    let overrides = bench::Overrides {
        seed,
        mode,
        out_dir: out,
    };
    let config = bench::parse_config_with(&text, &overrides)?;
    if config.run.out_dir.is_none() {
        return Err(BenchError::TypeMismatch {
            line: 0,
            message: "no output directory: pass --out or set out_dir under [run]".into(),
        });
    }

    let outcome = bench::execute(&config)?;
    print!(
        "{}",
        bench::summary_table(std::slice::from_ref(&outcome.result))
    );
    Ok(())
}

fn cmd_report(runs: Vec<PathBuf>, out: Option<PathBuf>) -> Result<(), BenchError> {
    let mut results = Vec::new();
    for dir in &runs {
        let path = dir.join("summary.tsv");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
        results.extend(bench::parse_summary_tsv(&text)?);
    }
    print!("{}", bench::summary_table(&results));
    if let Some(out) = out {
        std::fs::write(&out, bench::summary_tsv(&results))
            .map_err(|e| BenchError::Io(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn cmd_export(run: PathBuf, metric: String) -> Result<(), BenchError> {
    let path = run.join("series").join(format!("{metric}.tsv"));
    let text = std::fs::read_to_string(&path)
        .map_err(|_| BenchError::Io(format!("unknown series `{metric}` under {}", run.display())))?;
    print!("{text}");
    Ok(())
}
