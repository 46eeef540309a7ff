//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compress::SparsityConfig;
use crate::dsgd::{CompressionMode, CompressionStrategy, RoundConfig, RunConfig};
use crate::error::{Error, Result};
use crate::harness::report::Table1Row;
use crate::train::{DatasetKind, ModelKind, ModelSpec, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Local iterations per client held fixed across grid cells: each cell
    /// runs `total_local_iterations / n` rounds.
    pub total_local_iterations: u64,
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    pub dataset: DatasetSpec,
    pub model: ModelSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub rounds: RoundsSection,
    #[serde(default)]
    pub compression: CompressionSection,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub table1: Vec<Table1Row>,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_validation() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Rows to generate (synthetic kinds only).
    #[serde(default)]
    pub size: Option<usize>,
    /// Data seed; defaults to the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub synthetic: Option<DatasetKind>,
    #[serde(default)]
    pub idx: Option<IdxFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxFiles {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Inferred from the dataset when omitted.
    #[serde(default)]
    pub input_dim: Option<usize>,
    #[serde(default)]
    pub output_dim: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
}

fn default_hidden() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundsSection {
    #[serde(default = "default_one")]
    pub clients: usize,
    #[serde(default = "default_participation")]
    pub participation: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Communication delay used when there is no grid.
    #[serde(default = "default_one")]
    pub local_iters: usize,
}

fn default_one() -> usize {
    1
}
fn default_participation() -> f64 {
    1.0
}
fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionSection {
    pub mode: CompressionMode,
    /// Gradient sparsity used when there is no grid.
    pub p: f64,
    pub subsample_fraction: f64,
    pub min_k: usize,
    pub momentum_masking: bool,
}

impl Default for CompressionSection {
    fn default() -> Self {
        Self {
            mode: CompressionMode::SparseBinary,
            p: 0.01,
            subsample_fraction: 1.0,
            min_k: 1,
            momentum_masking: false,
        }
    }
}

impl CompressionSection {
    /// Strategy for a cell with gradient sparsity `p`. `p = 1` is always
    /// dense; `p < 1` never is (an `identity` mode falls back to
    /// sparse-binary).
    pub fn strategy_for(&self, p: f64) -> CompressionStrategy {
        if p >= 1.0 {
            return CompressionStrategy::identity();
        }
        let mode = match self.mode {
            CompressionMode::Identity => CompressionMode::SparseBinary,
            other => other,
        };
        CompressionStrategy {
            mode,
            sparsity: SparsityConfig {
                p,
                subsample_fraction: self.subsample_fraction,
                min_k: self.min_k,
            },
            momentum_masking: self.momentum_masking,
        }
    }
}

/// Either an explicit list of `(n, p)` cells or the full product of
/// `temporal` (values of `n`) and `gradient` (values of `p`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub temporal: Vec<usize>,
    #[serde(default)]
    pub gradient: Vec<f64>,
    #[serde(default)]
    pub cells: Vec<(usize, f64)>,
}

impl GridSpec {
    pub fn cells(&self) -> Vec<(usize, f64)> {
        if !self.cells.is_empty() {
            return self.cells.clone();
        }
        self.temporal
            .iter()
            .flat_map(|&n| self.gradient.iter().map(move |&p| (n, p)))
            .collect()
    }
}

/// Parses `"1x1,10x0.1"` into grid cells.
pub fn parse_grid_list(text: &str) -> Result<Vec<(usize, f64)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|cell| {
            let (n, p) = cell.split_once(['x', 'X']).ok_or_else(|| {
                Error::Config(format!("--grid: cell `{cell}` is not of the form NxP"))
            })?;
            let n = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("--grid: bad n in `{cell}`")))?;
            let p = p
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("--grid: bad p in `{cell}`")))?;
            Ok((n, p))
        })
        .collect()
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text)?;
        // relative IDX paths are resolved against the config file
        if let (Some(idx), Some(dir)) = (spec.dataset.idx.as_mut(), path.parent()) {
            idx.images = dir.join(&idx.images);
            idx.labels = dir.join(&idx.labels);
        }
        Ok(spec)
    }

    pub fn cells(&self) -> Vec<(usize, f64)> {
        match &self.grid {
            Some(g) => g.cells(),
            None => {
                let p = if self.compression.mode == CompressionMode::Identity {
                    1.0
                } else {
                    self.compression.p
                };
                vec![(self.rounds.local_iters, p)]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_local_iterations == 0 {
            return Err(Error::Config(
                "total_local_iterations: must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(
                "validation_fraction: must be in [0, 1)".into(),
            ));
        }
        match (&self.dataset.synthetic, &self.dataset.idx) {
            (Some(_), None) => {
                if self.dataset.size.unwrap_or(0) == 0 {
                    return Err(Error::Config(
                        "dataset.size: required and positive for synthetic data".into(),
                    ));
                }
            }
            (None, Some(_)) => {}
            _ => {
                return Err(Error::Config(
                    "dataset: exactly one of dataset.synthetic or dataset.idx must be given".into(),
                ))
            }
        }
        self.optimizer.validate()?;
        if self.rounds.clients == 0 {
            return Err(Error::Config("rounds.clients: must be at least 1".into()));
        }
        if self.rounds.batch_size == 0 {
            return Err(Error::Config(
                "rounds.batch_size: must be at least 1".into(),
            ));
        }
        if !(self.rounds.participation > 0.0 && self.rounds.participation <= 1.0) {
            return Err(Error::Config(
                "rounds.participation: must be in (0, 1]".into(),
            ));
        }
        if let Some(g) = &self.grid {
            if g.cells.is_empty() && (g.temporal.is_empty() || g.gradient.is_empty()) {
                return Err(Error::Config("grid: axes must be non-empty".into()));
            }
        }
        for (n, p) in self.cells() {
            if n == 0 {
                return Err(Error::Config("grid: every n must be at least 1".into()));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("grid: p = {p} is outside (0, 1]")));
            }
            if n as u64 > self.total_local_iterations {
                return Err(Error::Config(format!(
                    "grid: n = {n} exceeds total_local_iterations = {}",
                    self.total_local_iterations
                )));
            }
        }
        Ok(())
    }

    pub fn model_spec(&self, input_dim: usize, output_dim: usize) -> Result<ModelSpec> {
        ModelSpec::new(
            self.model.kind,
            self.model.input_dim.unwrap_or(input_dim),
            self.model.output_dim.unwrap_or(output_dim),
            self.model.hidden,
        )
    }

    /// Run configuration of one grid cell.
    pub fn run_config(&self, model: ModelSpec, n: usize, p: f64) -> RunConfig {
        RunConfig {
            model,
            optimizer: self.optimizer.clone(),
            round: RoundConfig {
                local_iters: n,
                participation: self.rounds.participation,
                rounds: self.total_local_iterations / n as u64,
                batch_size: self.rounds.batch_size,
                clients: self.rounds.clients,
            },
            strategy: self.compression.strategy_for(p),
            seed: self.seed,
            eval_every: self.eval_every,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        total_local_iterations = 100
        [dataset]
        size = 50
        synthetic = { kind = "blobs", dim = 3 }
        [model]
        kind = "logistic-regression"
        [rounds]
        clients = 2
    "#;

    #[test]
    fn parses_minimal_config() {
        let spec = ExperimentSpec::from_toml(MINIMAL).unwrap();
        assert_eq!(spec.cells(), vec![(1, 0.01)]);
        assert_eq!(spec.rounds.batch_size, 32);
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("clients = 2", "clients = 2\nclient_count = 3");
        let err = ExperimentSpec::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("client_count"), "{err}");
    }

    #[test]
    fn bad_grid_is_rejected() {
        let text = format!("{MINIMAL}\n[grid]\ncells = [[1, 1.5]]\n");
        let err = ExperimentSpec::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("grid"), "{err}");
    }

    #[test]
    fn grid_lists() {
        assert_eq!(
            parse_grid_list("1x1, 10x0.01").unwrap(),
            vec![(1, 1.0), (10, 0.01)]
        );
        assert!(parse_grid_list("10-0.1").is_err());
    }

    #[test]
    fn dense_cells_use_identity() {
        let c = CompressionSection::default();
        assert_eq!(c.strategy_for(1.0).mode, CompressionMode::Identity);
        assert_eq!(c.strategy_for(0.1).mode, CompressionMode::SparseBinary);
    }
}
