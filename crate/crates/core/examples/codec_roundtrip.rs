//! Compresses one random update, serializes it and decodes it again.
//!
//! cargo run --example codec_roundtrip

use rand::Rng;
use rand_distr::StandardNormal;

use sbc::codec::{b_star_for_sparsity, decode_round, encode_round, encode_update, wire};
use sbc::compress::{sparse_binarize, SparsityConfig, TensorUpdate};
use sbc::rng;
use sbc::tensor::FlatTensor;

fn main() -> sbc::Result<()> {
    let n = 100_000;
    let mut r = rng::stream(1, 0, 0);
    let dw = FlatTensor::new(
        "layer.weight",
        vec![250, 400],
        (0..n).map(|_| r.sample(StandardNormal)).collect(),
    )?;

    let p = 0.01;
    let update = TensorUpdate::Binary(sparse_binarize(&dw, &SparsityConfig::new(p)?)?);
    let b_star = b_star_for_sparsity(p)?;
    let bytes = encode_round(&[encode_update(&update, b_star)?])?;

    let messages = decode_round(&bytes)?;
    let back = wire::decode_update(&messages[0])?;
    assert_eq!(back, update);

    if let TensorUpdate::Binary(u) = &back {
        println!("entries          {n}");
        println!(
            "sent             {} ({:?}, mean {:.4})",
            u.positions.len(),
            u.sign,
            u.mean
        );
        println!("golomb b*        {b_star}");
        println!(
            "header           {} bytes",
            messages[0].header.encoded_len()
        );
        println!("position bits    {}", messages[0].payload.len());
        println!(
            "bits per entry   {:.3}",
            messages[0].payload.len() as f64 / u.positions.len() as f64
        );
        println!("upload           {} bytes vs {} dense", bytes.len(), 4 * n);
    }
    Ok(())
}
