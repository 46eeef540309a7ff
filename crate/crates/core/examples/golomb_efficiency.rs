//! Measured Golomb position cost against its expectation and against fixed
//! 16 and 32 bit indices.
//!
//! cargo run --release --example golomb_efficiency

use rand::Rng;

use sbc::codec::{b_star_for_sparsity, encode_positions, expected_position_bits};
use sbc::rng;

fn main() -> sbc::Result<()> {
    let len = 10_000_000u32;
    println!(
        "{:>8} {:>4} {:>10} {:>10} {:>9}",
        "p", "b*", "expected", "measured", "vs 32bit"
    );
    for p in [0.1, 0.03, 0.01, 0.003, 0.001, 0.0001] {
        let mut r = rng::stream(3, 0, 0);
        let positions: Vec<u32> = (0..len).filter(|_| r.random::<f64>() < p).collect();
        let b = b_star_for_sparsity(p)?;
        let bits = encode_positions(&positions, b)?.len() as f64 / positions.len() as f64;
        println!(
            "{p:>8} {b:>4} {:>10.3} {bits:>10.3} {:>8.1}x",
            expected_position_bits(p)?,
            32.0 / bits
        );
    }
    Ok(())
}
