//! Analytic bit-cost model.

/// Cost of a naive sparse encoding: every entry pays a fixed position field
/// and a fixed value field.
pub fn naive_bits(count: u64, position_bits: u64, value_bits: u64) -> u64 {
    count * (position_bits + value_bits)
}

/// Total upstream bits: iterations x communication frequency x nonzeros per
/// message x (position bits + value bits) x clients.
pub fn total_bits_model(
    iterations: f64,
    frequency: f64,
    nonzeros: f64,
    position_bits: f64,
    value_bits: f64,
    clients: f64,
) -> f64 {
    iterations * frequency * nonzeros * (position_bits + value_bits) * clients
}

/// Asymptotic compression rate against dense 32-bit updates sent every
/// iteration, for a method with the given temporal and gradient sparsity.
pub fn compression_rate(temporal: f64, gradient: f64, value_bits: f64, position_bits: f64) -> f64 {
    let baseline = total_bits_model(1.0, 1.0, 1.0, 0.0, 32.0, 1.0);
    let method = total_bits_model(1.0, temporal, gradient, position_bits, value_bits, 1.0);
    baseline / method
}
