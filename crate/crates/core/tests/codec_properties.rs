use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use rand_distr::{Distribution, Geometric};

use sbc::codec::wire::{self, Cursor, EncodedMessage};
use sbc::codec::{
    b_star_for_sparsity, decode_positions, decode_round, encode_positions, encode_round,
    expected_position_bits, BitStream,
};
use sbc::compress::{DenseUpdate, Sign, SparseBinaryUpdate, SparseValueUpdate, TensorUpdate};
use sbc::rng;

/// Sorted unique positions below a random length.
fn support() -> impl Strategy<Value = (u32, Vec<u32>)> {
    (1u32..5000).prop_flat_map(|len| {
        let max = (len as usize).min(300);
        (
            Just(len),
            btree_set(0..len, 0..=max).prop_map(|s| s.into_iter().collect()),
        )
    })
}

fn binary_update() -> impl Strategy<Value = SparseBinaryUpdate> {
    (support(), "[a-z.]{1,12}", 0.0f32..100.0, any::<bool>()).prop_map(
        |((len, positions), name, mean, neg)| SparseBinaryUpdate {
            tensor_name: name,
            tensor_length: len,
            positions,
            mean,
            sign: if neg { Sign::Negative } else { Sign::Positive },
        },
    )
}

proptest! {
    #[test]
    fn binary_messages_round_trip(u in binary_update(), b in 0u8..12) {
        let msg = wire::encode(&u, b).unwrap();
        let bytes = msg.to_bytes();
        prop_assert_eq!(bytes.len(), msg.byte_len());
        let back = EncodedMessage::read_from(&mut Cursor::new(&bytes)).unwrap();
        prop_assert_eq!(wire::decode(&back).unwrap(), u);
    }

    #[test]
    fn payload_length_matches_gap_formula((_, positions) in support(), b in 0u8..12) {
        let bits = encode_positions(&positions, b).unwrap();
        let mut prev = -1i64;
        let mut expected = 0u64;
        for &p in &positions {
            let d = (p as i64 - prev) as u64;
            expected += ((d - 1) >> b) + 1 + b as u64;
            prev = p as i64;
        }
        prop_assert_eq!(bits.len() as u64, expected);
    }

    #[test]
    fn value_and_dense_updates_round_trip(
        (len, positions) in support(),
        seed in any::<u64>(),
        dense in vec(-1e6f32..1e6, 1..200),
    ) {
        let values: Vec<f32> = positions.iter().map(|&p| (p as f32 + 0.5) * if seed % 2 == 0 { 1.0 } else { -0.25 }).collect();
        let sparse = TensorUpdate::Sparse(SparseValueUpdate {
            tensor_name: "s".into(),
            tensor_length: len,
            positions,
            values,
        });
        let dense = TensorUpdate::Dense(DenseUpdate { tensor_name: "d".into(), values: dense });
        let msgs = vec![wire::encode_update(&sparse, 5).unwrap(), wire::encode_update(&dense, 0).unwrap()];
        let round = decode_round(&encode_round(&msgs).unwrap()).unwrap();
        prop_assert_eq!(wire::decode_update(&round[0]).unwrap(), sparse);
        prop_assert_eq!(wire::decode_update(&round[1]).unwrap(), dense);
    }

    #[test]
    fn bitstreams_survive_byte_packing(bits in vec(any::<bool>(), 0..300)) {
        let mut s = BitStream::new();
        bits.iter().for_each(|&b| s.push(b));
        let rebuilt = BitStream::from_bytes(s.as_bytes().to_vec(), bits.len()).unwrap();
        let mut r = rebuilt.reader();
        let read: Vec<bool> = (0..bits.len()).map(|_| r.read_bit().unwrap()).collect();
        prop_assert_eq!(read, bits);
        prop_assert!(r.read_bit().is_none());
    }

    #[test]
    fn truncated_rounds_are_rejected(u in binary_update(), cut in 1usize..8) {
        let bytes = encode_round(&[wire::encode(&u, 3).unwrap()]).unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(decode_round(&bytes[..bytes.len() - cut]).is_err());
    }
}

fn measured_bits(p: f64, samples: usize, seed: u64) -> f64 {
    let gaps = Geometric::new(p).unwrap();
    let mut rng = rng::stream(seed, 0, 0);
    let mut positions = Vec::with_capacity(samples);
    let mut pos = -1i64;
    for _ in 0..samples {
        pos += gaps.sample(&mut rng) as i64 + 1;
        positions.push(pos as u32);
    }
    let b = b_star_for_sparsity(p).unwrap();
    let bits = encode_positions(&positions, b).unwrap();
    assert_eq!(
        decode_positions(&bits, b, samples, pos as u32 + 1).unwrap(),
        positions
    );
    bits.len() as f64 / samples as f64
}

#[test]
fn golomb_cost_matches_expectation_across_sparsities() {
    for (p, samples) in [(0.1, 1_000_000), (0.01, 1_000_000), (0.001, 1_000_000)] {
        let measured = measured_bits(p, samples, 42);
        let expected = expected_position_bits(p).unwrap();
        assert!(
            (measured - expected).abs() / expected < 0.01,
            "p={p}: measured {measured}, expected {expected}"
        );
    }
}
