//! Sparsification, mean binarization and error-feedback residuals.
//!
//! Given a weight-update tensor, [`sparse_binarize`] keeps the `k` largest
//! positive entries or the `k` largest negative entries (whichever group has
//! the larger mean magnitude) and replaces them all with that single signed
//! mean. Everything that is not transmitted is carried to the next round by a
//! [`Residual`].

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{FlatTensor, ParameterSet};

/// Selection parameters shared by the sparsifying compressors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsityConfig {
    /// Fraction of entries to keep, in `(0, 1]`.
    pub p: f64,
    /// Fraction of the tensor sampled to estimate the selection threshold.
    /// `1.0` selects exactly.
    pub subsample_fraction: f64,
    pub min_k: usize,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            p: 0.01,
            subsample_fraction: 1.0,
            min_k: 1,
        }
    }
}

impl SparsityConfig {
    pub fn new(p: f64) -> Result<Self> {
        let cfg = Self {
            p,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Config(format!(
                "sparsity p must be in (0, 1], got {}",
                self.p
            )));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "subsample_fraction must be in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        Ok(())
    }

    /// `max(min_k, floor(p * n))`, never more than `n`.
    pub fn selection_count(&self, n: usize) -> usize {
        // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
        let k = (self.p * n as f64 + 1e-9).floor() as usize;
        k.max(self.min_k).min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn as_f32(self) -> f32 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// A tensor update whose nonzero entries all equal `sign * mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseBinaryUpdate {
    pub tensor_name: String,
    pub tensor_length: u32,
    /// Strictly increasing flat positions.
    pub positions: Vec<u32>,
    pub mean: f32,
    pub sign: Sign,
}

impl SparseBinaryUpdate {
    pub fn zero(tensor_name: impl Into<String>, tensor_length: u32) -> Self {
        Self {
            tensor_name: tensor_name.into(),
            tensor_length,
            positions: Vec::new(),
            mean: 0.0,
            sign: Sign::Positive,
        }
    }

    /// The single nonzero value, `sign * mean`.
    pub fn value(&self) -> f32 {
        self.sign.as_f32() * self.mean
    }

    pub fn is_zero(&self) -> bool {
        self.positions.is_empty() || self.mean == 0.0
    }

    pub fn dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.tensor_length as usize];
        let v = self.value();
        for &p in &self.positions {
            out[p as usize] = v;
        }
        out
    }

    /// Checks the ordering, range and magnitude invariants.
    pub fn validate(&self) -> Result<()> {
        validate_positions(&self.tensor_name, self.tensor_length, &self.positions)?;
        if self.mean.is_nan() || self.mean < 0.0 {
            return Err(Error::shape(
                &self.tensor_name,
                format!("mean {} is negative", self.mean),
            ));
        }
        Ok(())
    }
}

/// Sparse update carrying one explicit value per position (top-k dropping).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseValueUpdate {
    pub tensor_name: String,
    pub tensor_length: u32,
    pub positions: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseValueUpdate {
    pub fn validate(&self) -> Result<()> {
        validate_positions(&self.tensor_name, self.tensor_length, &self.positions)?;
        if self.positions.len() != self.values.len() {
            return Err(Error::shape(
                &self.tensor_name,
                format!(
                    "{} positions but {} values",
                    self.positions.len(),
                    self.values.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Uncompressed update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseUpdate {
    pub tensor_name: String,
    pub values: Vec<f32>,
}

/// Any per-tensor update a client can send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TensorUpdate {
    Binary(SparseBinaryUpdate),
    Sparse(SparseValueUpdate),
    Dense(DenseUpdate),
}

impl TensorUpdate {
    pub fn tensor_name(&self) -> &str {
        match self {
            TensorUpdate::Binary(u) => &u.tensor_name,
            TensorUpdate::Sparse(u) => &u.tensor_name,
            TensorUpdate::Dense(u) => &u.tensor_name,
        }
    }

    pub fn tensor_length(&self) -> usize {
        match self {
            TensorUpdate::Binary(u) => u.tensor_length as usize,
            TensorUpdate::Sparse(u) => u.tensor_length as usize,
            TensorUpdate::Dense(u) => u.values.len(),
        }
    }

    /// Number of transmitted entries.
    pub fn nnz(&self) -> usize {
        match self {
            TensorUpdate::Binary(u) => u.positions.len(),
            TensorUpdate::Sparse(u) => u.positions.len(),
            TensorUpdate::Dense(u) => u.values.len(),
        }
    }

    /// Explicit positions, or `None` when every position is covered.
    pub fn positions(&self) -> Option<&[u32]> {
        match self {
            TensorUpdate::Binary(u) => Some(&u.positions),
            TensorUpdate::Sparse(u) => Some(&u.positions),
            TensorUpdate::Dense(_) => None,
        }
    }

    /// Adds the dense realisation of the update into `out`.
    pub fn add_into(&self, out: &mut [f32]) -> Result<()> {
        if out.len() != self.tensor_length() {
            return Err(Error::shape(
                self.tensor_name(),
                format!(
                    "update of length {} applied to {} values",
                    self.tensor_length(),
                    out.len()
                ),
            ));
        }
        match self {
            TensorUpdate::Binary(u) => {
                let v = u.value();
                for &p in &u.positions {
                    out[p as usize] += v;
                }
            }
            TensorUpdate::Sparse(u) => {
                for (&p, &v) in u.positions.iter().zip(&u.values) {
                    out[p as usize] += v;
                }
            }
            TensorUpdate::Dense(u) => out.iter_mut().zip(&u.values).for_each(|(o, &v)| *o += v),
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Vec<f32> {
        match self {
            TensorUpdate::Binary(u) => u.dense(),
            TensorUpdate::Dense(u) => u.values.clone(),
            TensorUpdate::Sparse(u) => {
                let mut out = vec![0.0; u.tensor_length as usize];
                for (&p, &v) in u.positions.iter().zip(&u.values) {
                    out[p as usize] = v;
                }
                out
            }
        }
    }
}

impl From<SparseBinaryUpdate> for TensorUpdate {
    fn from(u: SparseBinaryUpdate) -> Self {
        TensorUpdate::Binary(u)
    }
}

impl From<SparseValueUpdate> for TensorUpdate {
    fn from(u: SparseValueUpdate) -> Self {
        TensorUpdate::Sparse(u)
    }
}

impl From<DenseUpdate> for TensorUpdate {
    fn from(u: DenseUpdate) -> Self {
        TensorUpdate::Dense(u)
    }
}

fn validate_positions(name: &str, len: u32, positions: &[u32]) -> Result<()> {
    if let Some(w) = positions.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::shape(
            name,
            format!("positions not increasing at {} -> {}", w[0], w[1]),
        ));
    }
    if let Some(&last) = positions.last() {
        if last >= len {
            return Err(Error::OutOfBounds(format!(
                "position {last} in tensor `{name}` of length {len}"
            )));
        }
    }
    Ok(())
}

/// Indices of the `k` largest `key` values, ties going to the lower index.
/// The result is in no particular order.
fn top_k_by(n: usize, k: usize, key: impl Fn(usize) -> f32) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..n as u32).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < n {
        idx.select_nth_unstable_by(k - 1, |&a, &b| {
            key(b as usize).total_cmp(&key(a as usize)).then(a.cmp(&b))
        });
        idx.truncate(k);
    }
    idx
}

fn mean_of(values: &[f32], idx: &[u32], f: impl Fn(f32) -> f32) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter()
        .map(|&i| f(values[i as usize]) as f64)
        .sum::<f64>()
        / idx.len() as f64
}

fn binary_from_candidates(dw: &FlatTensor, plus: Vec<u32>, minus: Vec<u32>) -> SparseBinaryUpdate {
    let v = dw.values();
    let mu_plus = mean_of(v, &plus, |x| x);
    let mu_minus = mean_of(v, &minus, |x| -x);
    let (sign, mut support) = if mu_plus >= mu_minus {
        (
            Sign::Positive,
            plus.into_iter()
                .filter(|&i| v[i as usize] > 0.0)
                .collect::<Vec<_>>(),
        )
    } else {
        (
            Sign::Negative,
            minus
                .into_iter()
                .filter(|&i| v[i as usize] < 0.0)
                .collect::<Vec<_>>(),
        )
    };
    let len = dw.len() as u32;
    if support.is_empty() {
        return SparseBinaryUpdate::zero(dw.name(), len);
    }
    support.sort_unstable();
    // Mean over the transmitted support: equals the top-k mean whenever all k
    // candidates carry the chosen sign.
    let mean = mean_of(v, &support, f32::abs) as f32;
    SparseBinaryUpdate {
        tensor_name: dw.name().to_string(),
        tensor_length: len,
        positions: support,
        mean,
        sign,
    }
}

fn check_input(dw: &FlatTensor, cfg: &SparsityConfig) -> Result<()> {
    cfg.validate()?;
    if dw.is_empty() {
        return Err(Error::Empty(format!("tensor `{}`", dw.name())));
    }
    if dw.len() > u32::MAX as usize {
        return Err(Error::shape(dw.name(), "tensor longer than u32::MAX"));
    }
    Ok(())
}

/// Sparse binarization with exact top-k selection.
///
/// `k = max(min_k, floor(p * n))`. The `k` largest values and the `k` largest
/// negated values are compared by mean; the winning group's same-signed
/// entries are sent with one shared magnitude. Positive wins ties.
pub fn sparse_binarize(dw: &FlatTensor, cfg: &SparsityConfig) -> Result<SparseBinaryUpdate> {
    check_input(dw, cfg)?;
    let v = dw.values();
    let k = cfg.selection_count(v.len());
    let plus = top_k_by(v.len(), k, |i| v[i]);
    let minus = top_k_by(v.len(), k, |i| -v[i]);
    Ok(binary_from_candidates(dw, plus, minus))
}

/// Like [`sparse_binarize`], but estimates the selection thresholds from a
/// random subsample when `cfg.subsample_fraction < 1`.
pub fn sparse_binarize_seeded(
    dw: &FlatTensor,
    cfg: &SparsityConfig,
    seed: u64,
) -> Result<SparseBinaryUpdate> {
    check_input(dw, cfg)?;
    let v = dw.values();
    let Some(sample) = subsample(v.len(), cfg, seed) else {
        return sparse_binarize(dw, cfg);
    };
    let k = sample_rank(cfg, sample.len());
    let t_plus = kth_largest(sample.iter().map(|&i| v[i]), k);
    let t_minus = kth_largest(sample.iter().map(|&i| -v[i]), k);
    let plus = (0..v.len() as u32)
        .filter(|&i| v[i as usize] >= t_plus)
        .collect();
    let minus = (0..v.len() as u32)
        .filter(|&i| -v[i as usize] >= t_minus)
        .collect();
    Ok(binary_from_candidates(dw, plus, minus))
}

fn subsample(n: usize, cfg: &SparsityConfig, seed: u64) -> Option<Vec<usize>> {
    if cfg.subsample_fraction >= 1.0 {
        return None;
    }
    let m = ((cfg.subsample_fraction * n as f64).ceil() as usize).clamp(1, n);
    if sample_rank(cfg, m) > m {
        return None;
    }
    let mut rng = rng::stream(seed, 0, n as u64);
    Some(index::sample(&mut rng, n, m).into_vec())
}

fn sample_rank(cfg: &SparsityConfig, m: usize) -> usize {
    ((cfg.p * m as f64 - 1e-9).ceil() as usize).max(1)
}

fn kth_largest(values: impl Iterator<Item = f32>, k: usize) -> f32 {
    let mut vals: Vec<f32> = values.collect();
    let (_, kth, _) = vals.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *kth
}

/// Magnitude threshold estimated from a uniform subsample of
/// `ceil(subsample_fraction * n)` entries: the `ceil(p * m)`-th largest
/// magnitude in the sample. `None` means exact selection should be used.
pub fn threshold_via_subsample(dw: &FlatTensor, cfg: &SparsityConfig, seed: u64) -> Option<f32> {
    let v = dw.values();
    let sample = subsample(v.len(), cfg, seed)?;
    let k = sample_rank(cfg, sample.len());
    Some(kth_largest(sample.iter().map(|&i| v[i].abs()), k))
}

/// Exact magnitude threshold: the `k`-th largest `|dw|`.
pub fn exact_magnitude_threshold(dw: &FlatTensor, cfg: &SparsityConfig) -> f32 {
    let k = cfg.selection_count(dw.len()).max(1);
    kth_largest(dw.values().iter().map(|x| x.abs()), k)
}

/// Top-k by magnitude with the exact values kept (gradient dropping).
pub fn top_k_values(dw: &FlatTensor, cfg: &SparsityConfig, seed: u64) -> Result<SparseValueUpdate> {
    check_input(dw, cfg)?;
    let v = dw.values();
    let mut positions: Vec<u32> = match threshold_via_subsample(dw, cfg, seed) {
        Some(t) => (0..v.len() as u32)
            .filter(|&i| v[i as usize].abs() >= t)
            .collect(),
        None => top_k_by(v.len(), cfg.selection_count(v.len()), |i| v[i].abs()),
    };
    positions.retain(|&i| v[i as usize] != 0.0);
    positions.sort_unstable();
    let values = positions.iter().map(|&i| v[i as usize]).collect();
    Ok(SparseValueUpdate {
        tensor_name: dw.name().to_string(),
        tensor_length: v.len() as u32,
        positions,
        values,
    })
}

/// Per-client accumulator of everything computed but not yet transmitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual(ParameterSet);

impl Residual {
    /// A zero residual shaped like `params`.
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self(params.zeros_like())
    }

    pub fn as_set(&self) -> &ParameterSet {
        &self.0
    }

    pub fn into_set(self) -> ParameterSet {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|t| t.values().iter().all(|&v| v == 0.0))
    }
}

fn accumulate_with<U>(
    dw: &ParameterSet,
    residual: &Residual,
    mut compress: impl FnMut(usize, &FlatTensor) -> Result<U>,
    realise: impl Fn(&U) -> TensorUpdate,
) -> Result<(Vec<U>, Residual)> {
    let mut acc = residual.0.add(dw)?;
    let mut updates = Vec::with_capacity(acc.len());
    for (i, tensor) in acc.tensors_mut().iter_mut().enumerate() {
        let update = compress(i, tensor)?;
        let sent = realise(&update);
        let mut negated = vec![0.0f32; tensor.len()];
        sent.add_into(&mut negated)?;
        tensor
            .values_mut()
            .iter_mut()
            .zip(&negated)
            .for_each(|(a, &s)| *a -= s);
        updates.push(update);
    }
    Ok((updates, Residual(acc)))
}

/// Adds `dw` to the residual, sparse-binarizes every tensor of the sum and
/// keeps what was not sent as the new residual.
pub fn accumulate_and_compress(
    dw: &ParameterSet,
    residual: &Residual,
    cfg: &SparsityConfig,
    seed: u64,
) -> Result<(Vec<SparseBinaryUpdate>, Residual)> {
    accumulate_with(
        dw,
        residual,
        |i, t| sparse_binarize_seeded(t, cfg, rng::derive_seed(seed, i as u64, 0)),
        |u| TensorUpdate::Binary(u.clone()),
    )
}

/// Residual accumulation with [`top_k_values`] as the compressor.
pub fn accumulate_and_compress_values(
    dw: &ParameterSet,
    residual: &Residual,
    cfg: &SparsityConfig,
    seed: u64,
) -> Result<(Vec<SparseValueUpdate>, Residual)> {
    accumulate_with(
        dw,
        residual,
        |i, t| top_k_values(t, cfg, rng::derive_seed(seed, i as u64, 0)),
        |u| TensorUpdate::Sparse(u.clone()),
    )
}

/// Zeroes every momentum entry at a position some update transmitted.
pub fn mask_momentum_in_place(momentum: &mut ParameterSet, updates: &[TensorUpdate]) -> Result<()> {
    for update in updates {
        let name = update.tensor_name();
        let slot = momentum
            .get_mut(name)
            .ok_or_else(|| Error::shape(name, "no momentum slot for updated tensor"))?;
        if slot.len() != update.tensor_length() {
            return Err(Error::shape(
                name,
                format!(
                    "update length {} vs momentum length {}",
                    update.tensor_length(),
                    slot.len()
                ),
            ));
        }
        let values = slot.values_mut();
        match update.positions() {
            None => values.fill(0.0),
            Some(positions) => {
                for &p in positions {
                    let v = values.get_mut(p as usize).ok_or_else(|| {
                        Error::OutOfBounds(format!("position {p} in tensor `{name}`"))
                    })?;
                    *v = 0.0;
                }
            }
        }
    }
    Ok(())
}

pub fn mask_momentum(momentum: &ParameterSet, updates: &[TensorUpdate]) -> Result<ParameterSet> {
    let mut out = momentum.clone();
    mask_momentum_in_place(&mut out, updates)?;
    Ok(out)
}

/// Mean of `a` over `support`: the coefficient `c` minimising
/// `||a - c * 1_support||_2`.
pub fn projection_value(a: &[f32], support: &[u32]) -> Result<f32> {
    if support.is_empty() {
        return Err(Error::Empty("projection support".into()));
    }
    if let Some(&bad) = support.iter().find(|&&i| i as usize >= a.len()) {
        return Err(Error::OutOfBounds(format!(
            "support index {bad} for length {}",
            a.len()
        )));
    }
    Ok(mean_of(a, support, |x| x) as f32)
}
