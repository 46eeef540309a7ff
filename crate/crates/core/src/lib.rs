//! Sparse binary compression for synchronous distributed SGD.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: named flat tensors and parameter sets.
//! * [`compress`]: top-k sparsification, mean binarization, residuals and
//!   momentum masking.
//! * [`codec`]: Golomb position coding, the wire format and bit accounting.
//! * [`train`]: small models with hand-written backpropagation, optimizers
//!   and datasets.
//! * [`dsgd`]: the client/server round loop with pluggable compression.
//! * [`harness`]: experiment configs, sparsity-grid sweeps and reports.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod codec;
pub mod compress;
pub mod dsgd;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
