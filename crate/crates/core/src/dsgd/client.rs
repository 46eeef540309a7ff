use crate::codec::{encode_round, encode_update, total_bits_model};
use crate::compress::{mask_momentum_in_place, Residual};
use crate::dsgd::CompressionStrategy;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::ParameterSet;
use crate::train::{sgd_n, Dataset, Model, OptimizerConfig, OptimizerState};

/// Stream id for compression randomness (threshold subsampling).
const COMPRESSION_STREAM: u64 = u64::MAX - 3;

/// One client's private state.
#[derive(Debug, Clone)]
pub struct ClientState {
    id: usize,
    model: Model,
    residual: Residual,
    optimizer: OptimizerState,
    shard: Dataset,
}

/// Settings a client needs for one round.
#[derive(Debug, Clone, Copy)]
pub struct ClientRoundConfig<'a> {
    pub local_iters: usize,
    pub batch_size: usize,
    pub strategy: &'a CompressionStrategy,
    pub seed: u64,
}

/// What a client sends in one round, plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpload {
    pub client: usize,
    pub bytes: Vec<u8>,
    /// `8 * bytes.len()`.
    pub bits: u64,
    pub nonzeros: u64,
    pub theoretical_bits: f64,
    pub local_loss: f64,
}

impl ClientState {
    pub fn new(id: usize, model: Model, optimizer: &OptimizerConfig, shard: Dataset) -> Self {
        Self {
            id,
            residual: Residual::zeros_like(model.params()),
            optimizer: OptimizerState::new(optimizer.clone(), model.params()),
            model,
            shard,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn weights(&self) -> &ParameterSet {
        self.model.params()
    }

    pub fn residual(&self) -> &Residual {
        &self.residual
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn shard(&self) -> &Dataset {
        &self.shard
    }

    /// `W_i <- W_i + delta`.
    pub fn apply_broadcast(&mut self, delta: &ParameterSet) -> Result<()> {
        self.model.params_mut().add_assign(delta)
    }

    /// Trains for `n` iterations from the current weights, compresses the
    /// update and serializes it. The local weights are left at their
    /// start-of-round value: only the broadcast moves them.
    pub fn run_round(&mut self, round: u64, cfg: &ClientRoundConfig<'_>) -> Result<ClientUpload> {
        let start = self.model.params().clone();
        let mut batch_rng = rng::stream(cfg.seed, self.id as u64, round);
        let local_loss = sgd_n(
            &mut self.model,
            &mut self.optimizer,
            &self.shard,
            cfg.local_iters,
            cfg.batch_size,
            &mut batch_rng,
        )?;
        let trained = self.model.params().clone();
        self.model.set_params(start.clone())?;
        let dw = trained.sub(&start)?;

        let compress_seed = rng::derive_seed(
            rng::derive_seed(cfg.seed, COMPRESSION_STREAM, self.id as u64),
            round,
            0,
        );
        let (updates, residual) = cfg.strategy.compress(&dw, &self.residual, compress_seed)?;
        self.residual = residual;
        if cfg.strategy.momentum_masking {
            if let Some(buf) = self.optimizer.momentum_buffer_mut() {
                mask_momentum_in_place(buf, &updates)?;
            }
        }

        let b_star = cfg.strategy.b_star();
        let messages = updates
            .iter()
            .map(|u| encode_update(u, b_star))
            .collect::<Result<Vec<_>>>()?;
        let bytes = encode_round(&messages)?;
        let nonzeros: u64 = updates.iter().map(|u| u.nnz() as u64).sum();
        let (pos_bits, val_bits) = cfg.strategy.bits_per_entry();
        Ok(ClientUpload {
            client: self.id,
            bits: 8 * bytes.len() as u64,
            bytes,
            nonzeros,
            theoretical_bits: total_bits_model(1.0, 1.0, nonzeros as f64, pos_bits, val_bits, 1.0),
            local_loss,
        })
    }
}

/// Applies an optional pending broadcast and then runs one round.
pub fn client_round(
    client: &mut ClientState,
    broadcast: Option<&ParameterSet>,
    round: u64,
    cfg: &ClientRoundConfig<'_>,
) -> Result<ClientUpload> {
    let id = client.id;
    let wrap = |e: Error| Error::Client {
        client: id,
        source: Box::new(e),
    };
    if let Some(delta) = broadcast {
        client.apply_broadcast(delta).map_err(wrap)?;
    }
    client.run_round(round, cfg).map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode_round;
    use crate::train::{make_dataset, DatasetKind, ModelKind, ModelSpec};

    fn client(lr: f32) -> ClientState {
        let data = make_dataset(
            &DatasetKind::Blobs {
                dim: 4,
                separation: 3.0,
            },
            64,
            2,
        )
        .unwrap();
        let spec = ModelSpec::new(ModelKind::LogisticRegression, 4, 2, 0).unwrap();
        ClientState::new(0, Model::new(spec, 1), &OptimizerConfig::sgd(lr), data)
    }

    #[test]
    fn identity_single_step_sends_the_gradient_step() {
        let mut c = client(0.5);
        let strategy = CompressionStrategy::identity();
        let cfg = ClientRoundConfig {
            local_iters: 1,
            batch_size: 8,
            strategy: &strategy,
            seed: 4,
        };
        let up = client_round(&mut c, None, 0, &cfg).unwrap();
        assert!(c.residual().is_zero());
        assert_eq!(up.bits, 8 * up.bytes.len() as u64);
        assert_eq!(decode_round(&up.bytes).unwrap().len(), 2);
    }

    #[test]
    fn zero_learning_rate_sends_zero_update() {
        let mut c = client(0.0);
        let strategy = CompressionStrategy::sparse_binary(0.25).unwrap();
        let cfg = ClientRoundConfig {
            local_iters: 3,
            batch_size: 8,
            strategy: &strategy,
            seed: 4,
        };
        let up = c.run_round(0, &cfg).unwrap();
        let msgs = decode_round(&up.bytes).unwrap();
        for m in &msgs {
            let u = crate::codec::decode_update(m).unwrap();
            assert!(u.to_dense().iter().all(|&v| v == 0.0));
        }
        assert!(c.residual().is_zero());
    }

    #[test]
    fn rounds_are_deterministic() {
        let strategy = CompressionStrategy::sparse_binary(0.25).unwrap();
        let cfg = ClientRoundConfig {
            local_iters: 5,
            batch_size: 4,
            strategy: &strategy,
            seed: 9,
        };
        let a = client(0.1).run_round(3, &cfg).unwrap();
        let b = client(0.1).run_round(3, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
