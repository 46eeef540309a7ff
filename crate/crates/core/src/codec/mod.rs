//! Bit-exact serialization of compressed updates.
//!
//! Positions are Golomb coded (see [`golomb`]), each message carries its own
//! remainder width so a decoder never has to recompute it, and
//! [`accounting`] holds the analytic cost model used for reporting.

pub mod accounting;
pub mod bits;
pub mod golomb;
pub mod wire;

pub use accounting::{compression_rate, naive_bits, total_bits_model};
pub use bits::{BitReader, BitStream};
pub use golomb::{
    b_star_for_sparsity, decode_positions, encode_positions, expected_bits_with,
    expected_position_bits, gap_code_length, golomb_parameter,
};
pub use wire::{
    decode, decode_round, decode_update, dense_round_bits, encode, encode_round, encode_update,
    EncodedMessage, MessageHeader, PayloadKind,
};
