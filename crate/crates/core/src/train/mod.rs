//! Local training: models, optimizers, datasets and the `n`-step SGD loop
//! each client runs between communication rounds.

pub mod data;
pub mod idx;
pub mod model;
pub mod optim;

use rand::Rng;

pub use data::{make_dataset, split_iid, train_validation_split, Dataset, DatasetKind, Targets};
pub use idx::{load_idx, parse_idx, read_idx, write_idx, IdxArray, IdxData};
pub use model::{backward, forward, Evaluation, ForwardCache, Model, ModelKind, ModelSpec};
pub use optim::{LrDecay, OptimizerConfig, OptimizerKind, OptimizerState};

use crate::error::{Error, Result};
use crate::rng;

/// Draws `batch_size` rows uniformly with replacement.
pub fn sample_batch(data: &Dataset, batch_size: usize, rng: &mut impl Rng) -> Result<Dataset> {
    if data.is_empty() {
        return Err(Error::Empty("training shard".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let rows: Vec<usize> = (0..batch_size)
        .map(|_| rng.random_range(0..data.len()))
        .collect();
    Ok(data.subset(&rows))
}

/// One optimizer step on one sampled batch. Returns the batch loss.
pub fn sgd_step(
    model: &mut Model,
    opt: &mut OptimizerState,
    data: &Dataset,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<f32> {
    let batch = sample_batch(data, batch_size, rng)?;
    let (loss, grads) = model.loss_and_grad(&batch)?;
    opt.step(model.params_mut(), &grads)?;
    Ok(loss)
}

/// Runs `n` mini-batch steps on `shard` and returns the mean batch loss.
/// The model is updated in place; callers form the weight update by
/// subtracting the starting weights.
pub fn sgd_n(
    model: &mut Model,
    opt: &mut OptimizerState,
    shard: &Dataset,
    n: usize,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config(
            "local iterations n must be at least 1".into(),
        ));
    }
    let mut total = 0.0f64;
    for _ in 0..n {
        total += sgd_step(model, opt, shard, batch_size, rng)? as f64;
    }
    Ok(total / n as f64)
}

/// Plain single-node training. Step `t` draws its batch from
/// `rng::stream(seed, stream_id, t)`, which is the stream a distributed
/// client with id `stream_id` uses in round `t` when `n = 1`.
pub fn train_centralized(
    model: &mut Model,
    opt: &mut OptimizerState,
    data: &Dataset,
    steps: u64,
    batch_size: usize,
    seed: u64,
    stream_id: u64,
) -> Result<Vec<f32>> {
    (0..steps)
        .map(|t| {
            sgd_step(
                model,
                opt,
                data,
                batch_size,
                &mut rng::stream(seed, stream_id, t),
            )
        })
        .collect()
}
