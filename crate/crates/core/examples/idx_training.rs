//! Trains on an IDX image/label pair (the MNIST file format). Without
//! arguments it writes a small synthetic pair to a temp dir first.
//!
//! cargo run --release --example idx_training [-- IMAGES LABELS]

use std::error::Error;
use std::path::PathBuf;

use sbc::dsgd::{run, CompressionStrategy, RoundConfig, RunConfig};
use sbc::train::{
    load_idx, make_dataset, train_validation_split, write_idx, DatasetKind, IdxArray, IdxData,
    ModelKind, ModelSpec, OptimizerConfig, Targets,
};

/// 8x8 "images" of two blob classes, quantized to bytes.
fn synthetic_pair() -> Result<(PathBuf, PathBuf), Box<dyn Error>> {
    let data = make_dataset(
        &DatasetKind::Blobs {
            dim: 64,
            separation: 3.0,
        },
        2000,
        4,
    )?;
    let pixels = data
        .features()
        .iter()
        .map(|v| ((v + 4.0) * 32.0).clamp(0.0, 255.0) as u8)
        .collect();
    let Targets::Classes { labels, .. } = data.targets() else {
        unreachable!("blobs are labelled")
    };
    let dir = std::env::temp_dir().join("sbc-idx-example");
    std::fs::create_dir_all(&dir)?;
    let images = dir.join("images.idx3-ubyte");
    let label_file = dir.join("labels.idx1-ubyte");
    let write = |path: &PathBuf, array: IdxArray| std::fs::write(path, write_idx(&array));
    write(
        &images,
        IdxArray {
            dims: vec![data.len(), 8, 8],
            data: IdxData::U8(pixels),
        },
    )?;
    write(
        &label_file,
        IdxArray {
            dims: vec![data.len()],
            data: IdxData::U8(labels.iter().map(|&l| l as u8).collect()),
        },
    )?;
    Ok((images, label_file))
}

fn main() -> Result<(), Box<dyn Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (images, labels) = match args.as_slice() {
        [i, l] => (PathBuf::from(i), PathBuf::from(l)),
        _ => synthetic_pair()?,
    };
    let data = load_idx(&images, &labels)?;
    let classes = data.class_counts().len();
    println!(
        "{} rows, {} features, {classes} classes",
        data.len(),
        data.n_features()
    );
    let (train, val) = train_validation_split(&data, 0.2, 0)?;

    let config = RunConfig {
        model: ModelSpec::new(ModelKind::Mlp, data.n_features(), classes, 64)?,
        optimizer: OptimizerConfig::momentum(0.05, 0.9),
        round: RoundConfig {
            local_iters: 10,
            participation: 1.0,
            rounds: 100,
            batch_size: 32,
            clients: 4,
        },
        strategy: CompressionStrategy::sparse_binary(0.01)?.with_momentum_masking(true),
        seed: 0,
        eval_every: 20,
    };
    let log = run(config, train, Some(val))?;
    for r in log.rounds.iter().filter(|r| r.val_accuracy.is_some()) {
        println!(
            "round {:>3}  val acc {:.4}  cumulative uplink {:>9} bits",
            r.round,
            r.val_accuracy.unwrap_or(f64::NAN),
            r.cumulative_uplink_bits
        );
    }
    if let Some(s) = log.summary {
        println!("compression x{:.0}", s.compression_ratio);
    }
    Ok(())
}
