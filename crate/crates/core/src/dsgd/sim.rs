use rayon::prelude::*;

use crate::codec::dense_round_bits;
use crate::dsgd::{
    client_round, sample_participants, ClientRoundConfig, ClientState, RunConfig, ServerState,
};
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, RoundRecord, RunSummary};
use crate::tensor::ParameterSet;
use crate::train::{split_iid, Dataset, Evaluation, Model};

/// Carries serialized uploads from a client to the server.
pub trait Transport: Send {
    fn deliver(&mut self, client: usize, round: u64, bytes: Vec<u8>) -> Vec<u8>;
}

/// Hands the bytes over unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct InProcess;

impl Transport for InProcess {
    fn deliver(&mut self, _client: usize, _round: u64, bytes: Vec<u8>) -> Vec<u8> {
        bytes
    }
}

pub struct Simulation {
    config: RunConfig,
    server: ServerState,
    clients: Vec<ClientState>,
    train: Dataset,
    validation: Option<Dataset>,
    transport: Box<dyn Transport>,
    round: u64,
    cumulative_uplink: u64,
    cumulative_dense: u64,
    cumulative_theoretical: f64,
    dense_round: u64,
    last: Option<RoundRecord>,
}

impl Simulation {
    /// Shards `train` over the clients and initialises every client and the
    /// server with the same weights.
    pub fn new(config: RunConfig, train: Dataset, validation: Option<Dataset>) -> Result<Self> {
        config.validate()?;
        let init = Model::new(config.model, config.seed);
        let shards = split_iid(&train, config.round.clients, config.seed)?;
        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| ClientState::new(id, init.clone(), &config.optimizer, shard))
            .collect();
        Ok(Self {
            dense_round: dense_round_bits(init.params()),
            server: ServerState::new(init.into_params()),
            clients,
            train,
            validation,
            transport: Box::new(InProcess),
            round: 0,
            cumulative_uplink: 0,
            cumulative_dense: 0,
            cumulative_theoretical: 0.0,
            last: None,
            config,
        })
    }

    pub fn with_transport(mut self, transport: Box<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn rounds_done(&self) -> u64 {
        self.round
    }

    fn evaluate(&self) -> Result<(Evaluation, Option<Evaluation>)> {
        let model = Model::from_params(self.config.model, self.server.weights().clone())?;
        let train = model.evaluate(&self.train)?;
        let val = self
            .validation
            .as_ref()
            .map(|v| model.evaluate(v))
            .transpose()?;
        Ok((train, val))
    }

    /// Runs one full round: local training, upload, aggregation and
    /// broadcast to every client.
    pub fn step(&mut self) -> Result<RoundRecord> {
        let t = self.round;
        let cfg = &self.config;
        let participants =
            sample_participants(cfg.round.clients, cfg.round.participation, t, cfg.seed)?;
        let client_cfg = ClientRoundConfig {
            local_iters: cfg.round.local_iters,
            batch_size: cfg.round.batch_size,
            strategy: &cfg.strategy,
            seed: cfg.seed,
        };
        let mut active = vec![false; self.clients.len()];
        participants.iter().for_each(|&i| active[i] = true);
        let uploads = self
            .clients
            .par_iter_mut()
            .filter(|c| active[c.id()])
            .map(|c| client_round(c, None, t, &client_cfg))
            .collect::<Result<Vec<_>>>()?;

        let delivered: Vec<(usize, Vec<u8>)> = uploads
            .iter()
            .map(|u| {
                (
                    u.client,
                    self.transport.deliver(u.client, t, u.bytes.clone()),
                )
            })
            .collect();
        let delta = self.server.aggregate(&delivered)?;
        for c in &mut self.clients {
            c.apply_broadcast(&delta).map_err(|e| Error::Client {
                client: c.id(),
                source: Box::new(e),
            })?;
        }
        self.round += 1;

        let uplink_bits: Vec<u64> = uploads.iter().map(|u| u.bits).collect();
        let round_uplink: u64 = uplink_bits.iter().sum();
        let theoretical: f64 = uploads.iter().map(|u| u.theoretical_bits).sum();
        let dense = self.dense_round * cfg.round.local_iters as u64 * participants.len() as u64;
        self.cumulative_uplink += round_uplink;
        self.cumulative_dense += dense;
        self.cumulative_theoretical += theoretical;

        let every = cfg.eval_every;
        let last_round = self.round == cfg.round.rounds;
        let (train_eval, val_eval) =
            if last_round || (every > 0 && self.round.is_multiple_of(every)) {
                let (tr, va) = self.evaluate()?;
                (Some(tr), va)
            } else {
                (None, None)
            };
        let record = RoundRecord {
            round: self.round,
            local_iterations: self.round * cfg.round.local_iters as u64,
            participants,
            local_loss: uploads.iter().map(|u| u.local_loss).sum::<f64>() / uploads.len() as f64,
            train_loss: train_eval.map(|e| e.loss),
            train_accuracy: train_eval.and_then(|e| e.accuracy),
            val_loss: val_eval.map(|e| e.loss),
            val_accuracy: val_eval.and_then(|e| e.accuracy),
            uplink_bits,
            round_uplink_bits: round_uplink,
            theoretical_bits: theoretical,
            dense_baseline_bits: dense,
            nonzeros: uploads.iter().map(|u| u.nonzeros).sum(),
            cumulative_uplink_bits: self.cumulative_uplink,
            cumulative_dense_bits: self.cumulative_dense,
            compression_ratio: ratio(self.cumulative_dense, self.cumulative_uplink),
        };
        self.last = Some(record.clone());
        Ok(record)
    }

    /// Runs the remaining rounds, handing each record to `sink` as soon as
    /// it exists. On error the sink has already seen every completed round.
    pub fn run_with_sink(
        &mut self,
        mut sink: impl FnMut(&RoundRecord) -> Result<()>,
    ) -> Result<RunSummary> {
        while self.round < self.config.round.rounds {
            let record = self.step()?;
            sink(&record)?;
        }
        self.summary()
    }

    pub fn summary(&self) -> Result<RunSummary> {
        let (train, val) = match &self.last {
            Some(r) if r.train_loss.is_some() => (
                Evaluation {
                    loss: r.train_loss.unwrap(),
                    accuracy: r.train_accuracy,
                },
                r.val_loss.map(|loss| Evaluation {
                    loss,
                    accuracy: r.val_accuracy,
                }),
            ),
            _ => self.evaluate()?,
        };
        Ok(RunSummary {
            rounds: self.round,
            local_iterations: self.round * self.config.round.local_iters as u64,
            local_iters_per_round: self.config.round.local_iters,
            sparsity: self.config.strategy.gradient_sparsity(),
            mode: self.config.strategy.mode.name().to_string(),
            final_train_loss: Some(train.loss),
            final_train_accuracy: train.accuracy,
            final_val_loss: val.map(|v| v.loss),
            final_val_accuracy: val.and_then(|v| v.accuracy),
            total_uplink_bits: self.cumulative_uplink,
            total_dense_bits: self.cumulative_dense,
            total_theoretical_bits: self.cumulative_theoretical,
            compression_ratio: ratio(self.cumulative_dense, self.cumulative_uplink),
        })
    }

    pub fn into_weights(self) -> ParameterSet {
        self.server.weights().clone()
    }
}

fn ratio(dense: u64, sent: u64) -> f64 {
    if sent == 0 {
        1.0
    } else {
        dense as f64 / sent as f64
    }
}

/// Runs every round and collects the log.
pub fn run(config: RunConfig, train: Dataset, validation: Option<Dataset>) -> Result<MetricsLog> {
    let mut sim = Simulation::new(config, train, validation)?;
    let mut rounds = Vec::new();
    let summary = sim.run_with_sink(|r| {
        rounds.push(r.clone());
        Ok(())
    })?;
    Ok(MetricsLog {
        rounds,
        summary: Some(summary),
    })
}
