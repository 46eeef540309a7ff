//! Synchronous distributed SGD with compressed uploads.
//!
//! Each round the participating clients run `n` local iterations, compress
//! their weight update (plus residual), serialize it and hand the bytes to a
//! [`Transport`]. The server decodes every upload, averages in ascending
//! client order, and the dense average is broadcast to all clients.

mod client;
mod server;
mod sim;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use client::{client_round, ClientRoundConfig, ClientState, ClientUpload};
pub use server::ServerState;
pub use sim::{run, InProcess, Simulation, Transport};

use crate::codec::{b_star_for_sparsity, expected_bits_with};
use crate::compress::{
    accumulate_and_compress, accumulate_and_compress_values, DenseUpdate, Residual, SparsityConfig,
    TensorUpdate,
};
use crate::error::{Error, Result};
use crate::rng::{self, PARTICIPATION_STREAM};
use crate::tensor::ParameterSet;
use crate::train::{ModelSpec, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressionMode {
    /// Dense 32-bit updates, no residual.
    Identity,
    /// Top-k of one sign, binarized to the mean, Golomb-coded positions.
    SparseBinary,
    /// Top-k by magnitude with exact 32-bit values.
    TopKValues,
}

impl CompressionMode {
    pub fn name(self) -> &'static str {
        match self {
            CompressionMode::Identity => "identity",
            CompressionMode::SparseBinary => "sparse-binary",
            CompressionMode::TopKValues => "top-k-values",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionStrategy {
    pub mode: CompressionMode,
    pub sparsity: SparsityConfig,
    pub momentum_masking: bool,
}

impl CompressionStrategy {
    pub fn identity() -> Self {
        Self {
            mode: CompressionMode::Identity,
            sparsity: SparsityConfig {
                p: 1.0,
                ..SparsityConfig::default()
            },
            momentum_masking: false,
        }
    }

    pub fn sparse_binary(p: f64) -> Result<Self> {
        Ok(Self {
            mode: CompressionMode::SparseBinary,
            sparsity: SparsityConfig::new(p)?,
            momentum_masking: false,
        })
    }

    pub fn top_k_values(p: f64) -> Result<Self> {
        Ok(Self {
            mode: CompressionMode::TopKValues,
            sparsity: SparsityConfig::new(p)?,
            momentum_masking: false,
        })
    }

    pub fn with_momentum_masking(mut self, on: bool) -> Self {
        self.momentum_masking = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            CompressionMode::Identity => Ok(()),
            _ => self.sparsity.validate(),
        }
    }

    /// Effective gradient sparsity: 1 for dense updates.
    pub fn gradient_sparsity(&self) -> f64 {
        match self.mode {
            CompressionMode::Identity => 1.0,
            _ => self.sparsity.p,
        }
    }

    /// Golomb remainder width written into every sparse message.
    pub fn b_star(&self) -> u8 {
        match self.mode {
            CompressionMode::Identity => 0,
            _ => b_star_for_sparsity(self.sparsity.p).unwrap_or(0),
        }
    }

    /// `(position bits, value bits)` per transmitted entry in the analytic
    /// cost model.
    pub fn bits_per_entry(&self) -> (f64, f64) {
        match self.mode {
            CompressionMode::Identity => (0.0, 32.0),
            CompressionMode::SparseBinary => {
                (expected_bits_with(self.sparsity.p, self.b_star()), 0.0)
            }
            CompressionMode::TopKValues => {
                (expected_bits_with(self.sparsity.p, self.b_star()), 32.0)
            }
        }
    }

    /// The `compress(.)` hook: adds the residual to `dw`, compresses, and
    /// returns the per-tensor updates with the new residual.
    pub fn compress(
        &self,
        dw: &ParameterSet,
        residual: &Residual,
        seed: u64,
    ) -> Result<(Vec<TensorUpdate>, Residual)> {
        match self.mode {
            CompressionMode::Identity => {
                let updates = dw
                    .iter()
                    .map(|t| {
                        TensorUpdate::Dense(DenseUpdate {
                            tensor_name: t.name().to_string(),
                            values: t.values().to_vec(),
                        })
                    })
                    .collect();
                Ok((updates, residual.clone()))
            }
            CompressionMode::SparseBinary => {
                let (u, r) = accumulate_and_compress(dw, residual, &self.sparsity, seed)?;
                Ok((u.into_iter().map(TensorUpdate::Binary).collect(), r))
            }
            CompressionMode::TopKValues => {
                let (u, r) = accumulate_and_compress_values(dw, residual, &self.sparsity, seed)?;
                Ok((u.into_iter().map(TensorUpdate::Sparse).collect(), r))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    /// Local iterations per round (communication delay `n`).
    pub local_iters: usize,
    /// Fraction of clients taking part in each round, in `(0, 1]`.
    pub participation: f64,
    pub rounds: u64,
    pub batch_size: usize,
    pub clients: usize,
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_iters == 0 {
            return Err(Error::Config("local_iters must be at least 1".into()));
        }
        if self.clients == 0 {
            return Err(Error::Config("clients must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Config(format!(
                "participation must be in (0, 1], got {}",
                self.participation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub optimizer: OptimizerConfig,
    pub round: RoundConfig,
    pub strategy: CompressionStrategy,
    pub seed: u64,
    /// Evaluate every this many rounds; the last round is always evaluated.
    /// `0` evaluates the last round only.
    pub eval_every: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.round.validate()?;
        self.optimizer.validate()?;
        self.strategy.validate()
    }
}

/// Deterministic subset of `ceil(fraction * k)` client ids for `round`,
/// sorted ascending.
pub fn sample_participants(k: usize, fraction: f64, round: u64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "participation must be in (0, 1], got {fraction}"
        )));
    }
    let m = ((fraction * k as f64) - 1e-9).ceil().max(1.0) as usize;
    if m >= k {
        return Ok((0..k).collect());
    }
    let mut ids =
        index::sample(&mut rng::stream(seed, PARTICIPATION_STREAM, round), k, m).into_vec();
    ids.sort_unstable();
    Ok(ids)
}
