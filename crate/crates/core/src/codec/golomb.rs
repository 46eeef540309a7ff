//! Golomb coding of the gaps between consecutive nonzero positions.
//!
//! A gap `d >= 1` is written as `q = (d - 1) >> b` one-bits, a zero, and
//! the remainder `(d - 1) mod 2^b` in exactly `b` bits, most significant
//! first. The first gap is measured from a virtual position `-1`.

use super::bits::BitStream;
use crate::error::{Error, Result};

/// Remainder widths above this are never useful for `u32` positions.
pub const MAX_B_STAR: u8 = 32;

fn check_sparsity(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "sparsity must lie in (0, 1), got {p}"
        )))
    }
}

/// Remainder width for geometrically distributed gaps with success
/// probability `p`: `1 + floor(log2(ln(phi - 1) / ln(1 - p)))`, clamped to
/// `0..=MAX_B_STAR`.
pub fn golomb_parameter(p: f64) -> Result<u8> {
    check_sparsity(p)?;
    let phi = (5f64.sqrt() + 1.0) / 2.0;
    let ratio = (phi - 1.0).ln() / (1.0 - p).ln();
    let b = 1.0 + ratio.log2().floor();
    Ok(b.clamp(0.0, MAX_B_STAR as f64) as u8)
}

/// [`golomb_parameter`] extended to `p = 1`, where every gap is 1 and a pure
/// unary code (`b = 0`) is optimal.
pub fn b_star_for_sparsity(p: f64) -> Result<u8> {
    if p == 1.0 {
        Ok(0)
    } else {
        golomb_parameter(p)
    }
}

/// Expected bits per position under geometric gaps:
/// `b + 1 / (1 - (1 - p)^(2^b))`.
pub fn expected_position_bits(p: f64) -> Result<f64> {
    let b = golomb_parameter(p)?;
    Ok(expected_bits_with(p, b))
}

/// Expected bits per position for an arbitrary remainder width `b`.
pub fn expected_bits_with(p: f64, b_star: u8) -> f64 {
    let m = 2f64.powi(b_star as i32);
    b_star as f64 + 1.0 / (1.0 - (1.0 - p).powf(m))
}

/// Length in bits of the code for a single gap.
pub fn gap_code_length(gap: u64, b_star: u8) -> u64 {
    debug_assert!(gap >= 1);
    ((gap - 1) >> b_star) + 1 + b_star as u64
}

/// Encodes strictly increasing positions as Golomb-coded gaps.
pub fn encode_positions(positions: &[u32], b_star: u8) -> Result<BitStream> {
    if b_star > MAX_B_STAR {
        return Err(Error::Domain(format!("b* = {b_star} exceeds {MAX_B_STAR}")));
    }
    let mut out = BitStream::new();
    let mask = (1u64 << b_star) - 1;
    let mut prev: i64 = -1;
    for &pos in positions {
        let pos = pos as i64;
        if pos <= prev {
            return Err(Error::Domain(format!(
                "positions not strictly increasing at {pos}"
            )));
        }
        let d = (pos - prev - 1) as u64;
        out.push_unary(d >> b_star);
        out.push_bits(d & mask, b_star);
        prev = pos;
    }
    Ok(out)
}

/// Decodes exactly `count` positions, all below `tensor_length`, consuming
/// the whole stream.
pub fn decode_positions(
    bits: &BitStream,
    b_star: u8,
    count: usize,
    tensor_length: u32,
) -> Result<Vec<u32>> {
    if b_star > MAX_B_STAR {
        return Err(Error::corrupt(
            0,
            format!("b* = {b_star} exceeds {MAX_B_STAR}"),
        ));
    }
    let mut reader = bits.reader();
    let mut positions = Vec::with_capacity(count.min(tensor_length as usize));
    let mut pos: i64 = -1;
    for n in 0..count {
        let (q, r) = reader
            .read_unary()
            .zip(reader.read_bits(b_star))
            .ok_or_else(|| {
                Error::corrupt(
                    0,
                    format!("stream truncated after {n} of {count} positions"),
                )
            })?;
        let step = q
            .checked_shl(b_star as u32)
            .filter(|s| s >> b_star == q)
            .and_then(|s| s.checked_add(r + 1))
            .ok_or_else(|| Error::corrupt(0, "gap overflows"))?;
        pos = pos.saturating_add(i64::try_from(step).unwrap_or(i64::MAX));
        if pos >= tensor_length as i64 {
            return Err(Error::corrupt(
                0,
                format!("position {pos} outside tensor of length {tensor_length}"),
            ));
        }
        positions.push(pos as u32);
    }
    if reader.remaining() != 0 {
        return Err(Error::corrupt(
            0,
            format!(
                "{} bits left after the {count} positions in the header",
                reader.remaining()
            ),
        ));
    }
    Ok(positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits_of(s: &BitStream) -> String {
        (0..s.len())
            .map(|i| if s.get(i).unwrap() { '1' } else { '0' })
            .collect()
    }

    #[test]
    fn parameter_examples() {
        assert_eq!(golomb_parameter(0.01).unwrap(), 6);
        assert_eq!(golomb_parameter(0.5).unwrap(), 0);
        assert_eq!(golomb_parameter(0.9).unwrap(), 0);
        assert!(golomb_parameter(0.001).unwrap() >= golomb_parameter(0.01).unwrap());
        assert!(golomb_parameter(0.01).unwrap() >= golomb_parameter(0.1).unwrap());
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(golomb_parameter(bad), Err(Error::Domain(_))));
        }
        assert_eq!(b_star_for_sparsity(1.0).unwrap(), 0);
    }

    #[test]
    fn expected_bits_at_one_percent() {
        let b = expected_position_bits(0.01).unwrap();
        assert!((b - 8.108).abs() < 1e-3, "{b}");
        // one more remainder bit reproduces the 8.38 figure
        assert!((expected_bits_with(0.01, 7) - 8.38).abs() < 5e-3);
    }

    #[test]
    fn hand_traced_codes() {
        assert_eq!(bits_of(&encode_positions(&[0], 1).unwrap()), "00");
        assert_eq!(bits_of(&encode_positions(&[0, 2], 1).unwrap()), "0001");
        assert_eq!(bits_of(&encode_positions(&[4], 1).unwrap()), "1100");
        assert_eq!(bits_of(&encode_positions(&[0, 1, 3], 0).unwrap()), "0010");
    }

    #[test]
    fn round_trip_and_length_formula() {
        let positions = [3u32, 4, 90, 91, 700, 4095];
        for b in [0u8, 1, 3, 6, 12] {
            let s = encode_positions(&positions, b).unwrap();
            let mut prev = -1i64;
            let expected: u64 = positions
                .iter()
                .map(|&p| {
                    let d = (p as i64 - prev) as u64;
                    prev = p as i64;
                    gap_code_length(d, b)
                })
                .sum();
            assert_eq!(s.len() as u64, expected);
            assert_eq!(
                decode_positions(&s, b, positions.len(), 4096).unwrap(),
                positions
            );
        }
    }

    #[test]
    fn decode_detects_corruption() {
        let s = encode_positions(&[1, 5, 9], 2).unwrap();
        assert!(decode_positions(&s, 2, 4, 10).is_err());
        assert!(decode_positions(&s, 2, 2, 10).is_err());
        assert!(decode_positions(&s, 2, 3, 9).is_err());
        assert!(encode_positions(&[2, 2], 1).is_err());
    }
}
