//! Four clients train logistic regression on Gaussian blobs, once with
//! dense updates every iteration and once with sparse binary compression
//! (p = 0.01, 10 local iterations per round), at the same iteration budget.
//!
//! cargo run --release --example federated_blobs [-- DIM]

use std::time::Instant;

use sbc::dsgd::{run, CompressionStrategy, RoundConfig, RunConfig};
use sbc::train::{
    make_dataset, train_validation_split, DatasetKind, ModelKind, ModelSpec, OptimizerConfig,
};

fn main() -> sbc::Result<()> {
    let dim: usize = std::env::args()
        .nth(1)
        .map_or(2000, |s| s.parse().expect("DIM must be an integer"));
    let data = make_dataset(
        &DatasetKind::Blobs {
            dim,
            separation: 4.0,
        },
        10_000,
        7,
    )?;
    let (train, val) = train_validation_split(&data, 0.2, 7)?;
    let budget = 2000;

    let config = |n: usize, strategy| RunConfig {
        model: ModelSpec::new(ModelKind::LogisticRegression, dim, 2, 0).unwrap(),
        optimizer: OptimizerConfig::sgd(0.002),
        round: RoundConfig {
            local_iters: n,
            participation: 1.0,
            rounds: budget / n as u64,
            batch_size: 16,
            clients: 4,
        },
        strategy,
        seed: 7,
        eval_every: 0,
    };

    for (label, n, strategy) in [
        ("dense, n=1", 1, CompressionStrategy::identity()),
        (
            "sbc p=0.01, n=10",
            10,
            CompressionStrategy::sparse_binary(0.01)?,
        ),
    ] {
        let start = Instant::now();
        let log = run(config(n, strategy), train.clone(), Some(val.clone()))?;
        let s = log.summary.expect("summary");
        println!(
            "{label:<18} val acc {:.4}  uplink {:>12} bits  ratio x{:.0}  ({:.1}s)",
            s.final_val_accuracy.unwrap_or(f64::NAN),
            s.total_uplink_bits,
            s.compression_ratio,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
