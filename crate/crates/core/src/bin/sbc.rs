use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sbc::harness::{self, diagonal_report, table1_report, ExperimentSpec, GridSpec, GridSummary};

#[derive(Parser)]
#[command(
    name = "sbc",
    about = "Compressed distributed SGD experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (every grid cell) from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated `NxP` cells, e.g. `1x1,10x0.01`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Reports that need no training run.
    Report {
        #[command(subcommand)]
        report: Report,
    },
}

#[derive(Subcommand)]
enum Report {
    /// Asymptotic compression rates of the config's `[[table1]]` rows.
    Table1 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Error statistics per total-sparsity diagonal of a grid summary.
    Diagonals {
        #[arg(long)]
        summary: PathBuf,
    },
}

fn run(cli: Cli) -> sbc::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            grid,
        } => {
            let mut spec = ExperimentSpec::load(&config)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if let Some(out) = out {
                spec.out = out;
            }
            if let Some(grid) = grid {
                spec.grid = Some(GridSpec {
                    temporal: Vec::new(),
                    gradient: Vec::new(),
                    cells: harness::parse_grid_list(&grid)?,
                });
            }
            let outcome = harness::run_experiment(&spec)?;
            for c in &outcome.cells {
                println!(
                    "n={:<5} p={:<6} error={:.4} ratio={:.1} -> {}",
                    c.n,
                    c.p,
                    c.summary.final_val_error().unwrap_or(f64::NAN),
                    c.summary.compression_ratio,
                    c.metrics_path.display()
                );
            }
            println!("grid summary: {}", outcome.summary_path.display());
        }
        Command::Report {
            report: Report::Table1 { config },
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| sbc::Error::Io {
                path: config.clone(),
                source: e,
            })?;
            // only the table rows are needed, so the rest of the file is not validated
            #[derive(serde::Deserialize)]
            struct Rows {
                #[serde(default)]
                table1: Vec<harness::Table1Row>,
            }
            let rows: Rows =
                toml::from_str(&text).map_err(|e| sbc::Error::Config(e.to_string()))?;
            let rows = if rows.table1.is_empty() {
                harness::default_table1_rows()
            } else {
                rows.table1
            };
            print!("{}", table1_report(&rows)?);
        }
        Command::Report {
            report: Report::Diagonals { summary },
        } => {
            println!("{}", diagonal_report(&GridSummary::read(&summary)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
