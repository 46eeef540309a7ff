//! Experiment configs, sparsity-grid sweeps and reports.
//!
//! A run writes one `cell_n{n}_p{p}.jsonl` metrics file per grid cell
//! (one JSON record per round, then a summary record) and a
//! `grid_summary.csv` matrix of final validation errors.

pub mod config;
pub mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{parse_grid_list, ExperimentSpec, GridSpec};
pub use report::{
    default_table1_rows, diagonal_report, table1_report, DiagonalReport, GridSummary, PositionBits,
    Table1Report, Table1Row,
};

use crate::dsgd::Simulation;
use crate::error::{Error, Result};
use crate::metrics::{LogLine, MetricsLog, RunSummary};
use crate::train::{load_idx, make_dataset, train_validation_split, Dataset};

pub const GRID_SUMMARY_FILE: &str = "grid_summary.csv";

pub fn cell_file_name(n: usize, p: f64) -> String {
    format!("cell_n{n}_p{p}.jsonl")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub n: usize,
    pub p: f64,
    pub metrics_path: PathBuf,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub cells: Vec<CellOutcome>,
    pub summary_path: PathBuf,
    pub grid: GridSummary,
}

/// Loads or generates the dataset and splits off the validation rows.
pub fn load_data(spec: &ExperimentSpec) -> Result<(Dataset, Option<Dataset>)> {
    let seed = spec.dataset.seed.unwrap_or(spec.seed);
    let data = match (&spec.dataset.synthetic, &spec.dataset.idx) {
        (Some(kind), _) => make_dataset(kind, spec.dataset.size.unwrap_or(0), seed)?,
        (None, Some(idx)) => load_idx(&idx.images, &idx.labels)?,
        (None, None) => return Err(Error::Config("dataset: no source given".into())),
    };
    if spec.validation_fraction == 0.0 {
        return Ok((data, None));
    }
    let (train, val) = train_validation_split(&data, spec.validation_fraction, seed)?;
    Ok((train, Some(val)))
}

/// Runs one cell, streaming every round record to `path` as it completes.
fn run_cell(
    spec: &ExperimentSpec,
    train: &Dataset,
    val: &Option<Dataset>,
    n: usize,
    p: f64,
    path: &Path,
) -> Result<RunSummary> {
    let model = spec.model_spec(train.n_features(), train.target_dim())?;
    let config = spec.run_config(model, n, p);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut sim = Simulation::new(config, train.clone(), val.clone())?;
    let result =
        sim.run_with_sink(|r| MetricsLog::write_line(&mut out, &LogLine::Round(r.clone())));
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            let _ = out.flush();
            return Err(e);
        }
    };
    MetricsLog::write_line(&mut out, &LogLine::Summary(summary.clone()))?;
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(summary)
}

/// Runs every grid cell at the same total local-iteration budget and writes
/// the per-cell metrics plus the grid summary under `spec.out`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;
    let (train, val) = load_data(spec)?;
    let cells = spec.cells();
    let outcomes = cells
        .par_iter()
        .map(|&(n, p)| {
            let path = spec.out.join(cell_file_name(n, p));
            let summary = run_cell(spec, &train, &val, n, p, &path)?;
            Ok(CellOutcome {
                n,
                p,
                metrics_path: path,
                summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = GridSummary::from_cells(
        &outcomes
            .iter()
            .map(|c| {
                (
                    c.n,
                    c.p,
                    c.summary
                        .final_val_error()
                        .or(c.summary.final_train_loss)
                        .unwrap_or(f64::NAN),
                )
            })
            .collect::<Vec<_>>(),
    );
    let summary_path = spec.out.join(GRID_SUMMARY_FILE);
    std::fs::write(&summary_path, grid.to_csv()?).map_err(|e| Error::io(&summary_path, e))?;
    Ok(ExperimentOutcome {
        cells: outcomes,
        summary_path,
        grid,
    })
}

/// Reads a metrics file written by [`run_experiment`].
pub fn read_metrics(path: impl AsRef<Path>) -> Result<MetricsLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    MetricsLog::read_ndjson(std::io::BufReader::new(file))
}
