//! Small differentiable models with hand-written backpropagation.
//!
//! The forward and backward passes are generic over the float type so the
//! same code runs in `f32` for training and in `f64` for gradient checks.

use std::iter::Sum;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, INIT_STREAM};
use crate::tensor::{FlatTensor, ParameterSet};
use crate::train::data::{Dataset, Targets};

pub trait Scalar: Float + Sum + Send + Sync + 'static {}
impl<T: Float + Sum + Send + Sync + 'static> Scalar for T {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Affine map trained on half squared error.
    LinearRegression,
    /// Affine map followed by softmax cross-entropy.
    LogisticRegression,
    /// One ReLU hidden layer followed by softmax cross-entropy.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Hidden width, used by [`ModelKind::Mlp`] only.
    pub hidden: usize,
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        input_dim: usize,
        output_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            input_dim,
            output_dim,
            hidden,
        };
        if input_dim == 0 || output_dim == 0 || (kind == ModelKind::Mlp && hidden == 0) {
            return Err(Error::Config(format!(
                "model dimensions must be positive: {spec:?}"
            )));
        }
        Ok(spec)
    }

    /// Names and shapes of the parameter tensors, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => vec![
                ("weight", vec![self.output_dim, self.input_dim]),
                ("bias", vec![self.output_dim]),
            ],
            ModelKind::Mlp => vec![
                ("hidden.weight", vec![self.hidden, self.input_dim]),
                ("hidden.bias", vec![self.hidden]),
                ("output.weight", vec![self.output_dim, self.hidden]),
                ("output.bias", vec![self.output_dim]),
            ],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(&self, seed: u64) -> ParameterSet {
        let mut rng = rng::stream(seed, INIT_STREAM, 0);
        let tensors = self
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                let values = if shape.len() == 2 {
                    let bound = 1.0 / (shape[1] as f32).sqrt();
                    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
                } else {
                    vec![0.0; len]
                };
                FlatTensor::new(name, shape, values).expect("shape matches length")
            })
            .collect();
        ParameterSet::from_tensors(tensors).expect("unique names")
    }

    fn check_params<T>(&self, params: &[Vec<T>]) -> Result<()> {
        let shapes = self.parameter_shapes();
        if params.len() != shapes.len() {
            return Err(Error::shape(
                "<model>",
                format!("{} tensors, expected {}", params.len(), shapes.len()),
            ));
        }
        for (p, (name, shape)) in params.iter().zip(&shapes) {
            if p.len() != shape.iter().product::<usize>() {
                return Err(Error::shape(
                    *name,
                    format!("{} values for shape {shape:?}", p.len()),
                ));
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Dataset) -> Result<()> {
        if batch.n_features() != self.input_dim {
            return Err(Error::shape(
                "<input>",
                format!(
                    "batch has {} features, model expects {}",
                    batch.n_features(),
                    self.input_dim
                ),
            ));
        }
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        match (self.kind, batch.targets()) {
            (ModelKind::LinearRegression, Targets::Values { dim, .. })
                if *dim == self.output_dim =>
            {
                Ok(())
            }
            (
                ModelKind::LogisticRegression | ModelKind::Mlp,
                Targets::Classes { n_classes, .. },
            ) if *n_classes <= self.output_dim => Ok(()),
            _ => Err(Error::shape(
                "<target>",
                format!(
                    "{:?} with {} outputs cannot fit these targets",
                    self.kind, self.output_dim
                ),
            )),
        }
    }
}

/// Intermediate values kept by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    input: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
    /// Predictions (regression) or class probabilities.
    output: Vec<T>,
    targets: Targets,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// Hidden pre-activations (empty for models without a hidden layer).
    pub fn hidden_pre(&self) -> &[T] {
        &self.hidden_pre
    }
}

fn cast<T: Scalar>(v: f32) -> T {
    T::from(v).expect("f32 fits every float type")
}

/// `out[b][o] = bias[o] + sum_i w[o][i] * x[b][i]`.
fn affine<T: Scalar>(x: &[T], rows: usize, inp: usize, w: &[T], bias: &[T]) -> Vec<T> {
    let outp = bias.len();
    let mut out = Vec::with_capacity(rows * outp);
    for r in 0..rows {
        let xr = &x[r * inp..(r + 1) * inp];
        for o in 0..outp {
            let wo = &w[o * inp..(o + 1) * inp];
            out.push(bias[o] + wo.iter().zip(xr).map(|(&a, &b)| a * b).sum::<T>());
        }
    }
    out
}

/// Gradients of an affine layer given `d_out`; returns `(dW, db)`.
fn affine_grads<T: Scalar>(
    x: &[T],
    d_out: &[T],
    rows: usize,
    inp: usize,
    outp: usize,
) -> (Vec<T>, Vec<T>) {
    let mut dw = vec![T::zero(); outp * inp];
    let mut db = vec![T::zero(); outp];
    for r in 0..rows {
        let xr = &x[r * inp..(r + 1) * inp];
        for o in 0..outp {
            let g = d_out[r * outp + o];
            db[o] = db[o] + g;
            dw[o * inp..(o + 1) * inp]
                .iter_mut()
                .zip(xr)
                .for_each(|(d, &xv)| *d = *d + g * xv);
        }
    }
    (dw, db)
}

/// Row-wise softmax in place; returns the summed negative log-likelihood.
fn softmax_nll<T: Scalar>(logits: &mut [T], classes: usize, labels: &[u32]) -> T {
    let mut nll = T::zero();
    for (row, &label) in logits.chunks_exact_mut(classes).zip(labels) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        nll = nll + log_z - row[label as usize];
        row.iter_mut().for_each(|v| *v = (*v - log_z).exp());
    }
    nll
}

/// Mean batch loss and the cache needed by [`backward`].
pub fn forward<T: Scalar>(
    spec: &ModelSpec,
    params: &[Vec<T>],
    batch: &Dataset,
) -> Result<(T, ForwardCache<T>)> {
    spec.check_params(params)?;
    spec.check_batch(batch)?;
    let rows = batch.len();
    let input: Vec<T> = batch.features().iter().map(|&v| cast(v)).collect();
    let (hidden_pre, hidden, mut output) = match spec.kind {
        ModelKind::LinearRegression | ModelKind::LogisticRegression => {
            let z = affine(&input, rows, spec.input_dim, &params[0], &params[1]);
            (Vec::new(), Vec::new(), z)
        }
        ModelKind::Mlp => {
            let pre = affine(&input, rows, spec.input_dim, &params[0], &params[1]);
            let h: Vec<T> = pre.iter().map(|&v| v.max(T::zero())).collect();
            let z = affine(&h, rows, spec.hidden, &params[2], &params[3]);
            (pre, h, z)
        }
    };
    let n = T::from(rows).expect("row count fits");
    let loss = match batch.targets() {
        Targets::Values { values, .. } => {
            let half = cast::<T>(0.5);
            output
                .iter()
                .zip(values)
                .map(|(&p, &y)| {
                    let e = p - cast(y);
                    half * e * e
                })
                .sum::<T>()
                / n
        }
        Targets::Classes { labels, .. } => softmax_nll(&mut output, spec.output_dim, labels) / n,
    };
    Ok((
        loss,
        ForwardCache {
            batch: rows,
            input,
            hidden_pre,
            hidden,
            output,
            targets: batch.targets().clone(),
        },
    ))
}

/// Exact gradients of the mean batch loss, one vector per parameter tensor.
pub fn backward<T: Scalar>(
    spec: &ModelSpec,
    params: &[Vec<T>],
    cache: &ForwardCache<T>,
) -> Vec<Vec<T>> {
    let rows = cache.batch;
    let n = T::from(rows).expect("row count fits");
    // gradient of the mean loss with respect to the final pre-activations
    let d_out: Vec<T> = match &cache.targets {
        Targets::Values { values, .. } => cache
            .output
            .iter()
            .zip(values)
            .map(|(&p, &y)| (p - cast(y)) / n)
            .collect(),
        Targets::Classes { labels, .. } => {
            let mut d = cache.output.clone();
            for (row, &label) in d.chunks_exact_mut(spec.output_dim).zip(labels) {
                row[label as usize] = row[label as usize] - T::one();
            }
            d.iter_mut().for_each(|v| *v = *v / n);
            d
        }
    };
    match spec.kind {
        ModelKind::LinearRegression | ModelKind::LogisticRegression => {
            let (dw, db) =
                affine_grads(&cache.input, &d_out, rows, spec.input_dim, spec.output_dim);
            vec![dw, db]
        }
        ModelKind::Mlp => {
            let (dw2, db2) =
                affine_grads(&cache.hidden, &d_out, rows, spec.hidden, spec.output_dim);
            let w2 = &params[2];
            let mut d_pre = vec![T::zero(); rows * spec.hidden];
            for r in 0..rows {
                for o in 0..spec.output_dim {
                    let g = d_out[r * spec.output_dim + o];
                    let w_row = &w2[o * spec.hidden..(o + 1) * spec.hidden];
                    d_pre[r * spec.hidden..(r + 1) * spec.hidden]
                        .iter_mut()
                        .zip(w_row)
                        .for_each(|(d, &w)| *d = *d + g * w);
                }
            }
            d_pre.iter_mut().zip(&cache.hidden_pre).for_each(|(d, &z)| {
                if z <= T::zero() {
                    *d = T::zero();
                }
            });
            let (dw1, db1) = affine_grads(&cache.input, &d_pre, rows, spec.input_dim, spec.hidden);
            vec![dw1, db1, dw2, db2]
        }
    }
}

/// Loss and accuracy over a whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    /// `None` for regression.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ParameterSet,
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Self {
        Self {
            params: spec.init(seed),
            spec,
        }
    }

    pub fn from_params(spec: ModelSpec, params: ParameterSet) -> Result<Self> {
        let expected = spec.init(0);
        expected.check_compatible(&params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    pub fn set_params(&mut self, params: ParameterSet) -> Result<()> {
        self.params.check_compatible(&params)?;
        self.params = params;
        Ok(())
    }

    fn raw_params(&self) -> Vec<Vec<f32>> {
        self.params.iter().map(|t| t.values().to_vec()).collect()
    }

    /// Parameters widened to `f64`, in storage order.
    pub fn params_f64(&self) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .map(|t| t.values().iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn forward_loss(&self, batch: &Dataset) -> Result<(f32, ForwardCache<f32>)> {
        forward(&self.spec, &self.raw_params(), batch)
    }

    pub fn backward(&self, cache: &ForwardCache<f32>) -> ParameterSet {
        let grads = backward(&self.spec, &self.raw_params(), cache);
        let tensors = self
            .params
            .iter()
            .zip(grads)
            .map(|(t, g)| t.with_values(g).expect("gradient matches parameter shape"))
            .collect();
        ParameterSet::from_tensors(tensors).expect("unique names")
    }

    pub fn loss_and_grad(&self, batch: &Dataset) -> Result<(f32, ParameterSet)> {
        let (loss, cache) = self.forward_loss(batch)?;
        Ok((loss, self.backward(&cache)))
    }

    /// Evaluates in chunks so large datasets never materialise one huge
    /// activation matrix.
    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        const CHUNK: usize = 1024;
        let params = self.raw_params();
        let mut loss = 0.0f64;
        let mut correct = 0usize;
        let rows: Vec<usize> = (0..data.len()).collect();
        for chunk in rows.chunks(CHUNK) {
            let batch = data.subset(chunk);
            let (l, cache) = forward(&self.spec, &params, &batch)?;
            loss += l as f64 * chunk.len() as f64;
            if let Targets::Classes { labels, .. } = batch.targets() {
                for (probs, &label) in cache.output.chunks_exact(self.spec.output_dim).zip(labels) {
                    let best = probs
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f32::NEG_INFINITY),
                            |b, (i, &p)| if p > b.1 { (i, p) } else { b },
                        )
                        .0;
                    correct += usize::from(best == label as usize);
                }
            }
        }
        Ok(Evaluation {
            loss: loss / data.len() as f64,
            accuracy: data
                .is_classification()
                .then(|| correct as f64 / data.len() as f64),
        })
    }
}
