//! A small, steady gradient on a few coordinates never crosses the top-k
//! threshold on its own, but the residual keeps it and sends it later.
//!
//! cargo run --example residual_accumulation

use rand::Rng;
use rand_distr::StandardNormal;

use sbc::compress::{accumulate_and_compress, Residual, SparsityConfig};
use sbc::rng;
use sbc::tensor::{FlatTensor, ParameterSet};

fn main() -> sbc::Result<()> {
    let n = 2000;
    let quiet = [7usize, 700, 1400];
    let cfg = SparsityConfig::new(0.01)?;
    let mut r = rng::stream(5, 0, 0);
    let mut residual = Residual::zeros_like(&ParameterSet::from_tensors(vec![FlatTensor::zeros(
        "w",
        vec![n],
    )?])?);
    let mut delivered = [0.0f32; 3];

    for t in 0..60u64 {
        let mut v: Vec<f32> = (0..n)
            .map(|_| 0.3 * r.sample::<f32, _>(StandardNormal))
            .collect();
        for &i in &quiet {
            v[i] = 0.05;
        }
        let dw = ParameterSet::from_tensors(vec![FlatTensor::from_vec("w", v)?])?;
        let (updates, next) = accumulate_and_compress(&dw, &residual, &cfg, t)?;
        residual = next;
        let sent = updates[0].dense();
        for (d, &i) in delivered.iter_mut().zip(&quiet) {
            *d += sent[i];
        }
        if t % 10 == 9 {
            let held: Vec<String> = quiet
                .iter()
                .map(|&i| format!("{:.3}", residual.as_set().tensors()[0].values()[i]))
                .collect();
            let got: Vec<String> = delivered.iter().map(|d| format!("{d:.3}")).collect();
            println!(
                "round {:>2}: pushed {:.2} each, delivered [{}], still held [{}]",
                t + 1,
                0.05 * (t + 1) as f32,
                got.join(", "),
                held.join(", ")
            );
        }
    }
    Ok(())
}
