//! Named, shaped `f32` tensors and ordered collections of them.
//!
//! Tensors are stored flat in row-major order (last dimension fastest). That
//! order defines the position indices written by the codec.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense tensor with a name and a shape, stored as one contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f32>,
}

impl FlatTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if shape.contains(&0) {
            return Err(Error::shape(
                name,
                format!("dimensions must be positive, got {shape:?}"),
            ));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::shape(
                name,
                format!(
                    "shape {shape:?} needs {expected} values, got {}",
                    values.len()
                ),
            ));
        }
        Ok(Self {
            name,
            shape,
            values,
        })
    }

    /// A one-dimensional tensor holding `values`.
    pub fn from_vec(name: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        let len = values.len();
        Self::new(name, vec![len], values)
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(name, shape, vec![0.0; len])
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            name: self.name.clone(),
            shape: self.shape.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Replaces the values, keeping name and shape.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        Self::new(self.name.clone(), self.shape.clone(), values)
    }

    fn check_compatible(&self, other: &FlatTensor) -> Result<()> {
        if self.name != other.name {
            return Err(Error::shape(
                self.name.clone(),
                format!("paired with tensor `{}`", other.name),
            ));
        }
        if self.shape != other.shape {
            return Err(Error::shape(
                self.name.clone(),
                format!("shape {:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(())
    }
}

/// Row-major flat position of `index` within `shape`.
pub fn flatten_index(shape: &[usize], index: &[usize]) -> Result<usize> {
    if shape.len() != index.len() {
        return Err(Error::OutOfBounds(format!(
            "index {index:?} has rank {} but shape {shape:?} has rank {}",
            index.len(),
            shape.len()
        )));
    }
    let mut flat = 0usize;
    for (&i, &d) in index.iter().zip(shape) {
        if i >= d {
            return Err(Error::OutOfBounds(format!(
                "index {index:?} outside shape {shape:?}"
            )));
        }
        flat = flat * d + i;
    }
    Ok(flat)
}

/// Inverse of [`flatten_index`].
pub fn unflatten_index(shape: &[usize], flat: usize) -> Result<Vec<usize>> {
    let len: usize = shape.iter().product();
    if flat >= len {
        return Err(Error::OutOfBounds(format!(
            "flat index {flat} outside shape {shape:?}"
        )));
    }
    let mut rest = flat;
    let mut index = vec![0; shape.len()];
    for (slot, &d) in index.iter_mut().zip(shape).rev() {
        *slot = rest % d;
        rest /= d;
    }
    Ok(index)
}

/// An ordered collection of uniquely named tensors.
///
/// Iteration follows insertion order. Arithmetic is componentwise and requires
/// both operands to have the same names, order and shapes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    tensors: Vec<FlatTensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tensors(tensors: Vec<FlatTensor>) -> Result<Self> {
        let mut set = Self::new();
        for t in tensors {
            set.push(t)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, tensor: FlatTensor) -> Result<()> {
        if self.get(tensor.name()).is_some() {
            return Err(Error::shape(tensor.name(), "duplicate tensor name"));
        }
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&FlatTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut FlatTensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn tensors(&self) -> &[FlatTensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [FlatTensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FlatTensor> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries over all tensors.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(FlatTensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self.tensors.iter().map(FlatTensor::zeros_like).collect(),
        }
    }

    pub fn check_compatible(&self, other: &ParameterSet) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            let name = self
                .tensors
                .iter()
                .chain(other.tensors.iter())
                .map(FlatTensor::name)
                .find(|n| self.get(n).is_none() || other.get(n).is_none())
                .unwrap_or("<set>");
            return Err(Error::shape(
                name,
                format!("{} tensors vs {}", self.tensors.len(), other.tensors.len()),
            ));
        }
        self.tensors
            .iter()
            .zip(&other.tensors)
            .try_for_each(|(a, b)| a.check_compatible(b))
    }

    fn zip_with(&self, other: &ParameterSet, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        self.check_compatible(other)?;
        let tensors = self
            .tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| FlatTensor {
                name: a.name.clone(),
                shape: a.shape.clone(),
                values: a
                    .values
                    .iter()
                    .zip(&b.values)
                    .map(|(&x, &y)| f(x, y))
                    .collect(),
            })
            .collect();
        Ok(Self { tensors })
    }

    pub fn add(&self, other: &ParameterSet) -> Result<Self> {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &ParameterSet) -> Result<Self> {
        self.zip_with(other, |x, y| x - y)
    }

    pub fn scale(&self, c: f32) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| FlatTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    values: t.values.iter().map(|&x| c * x).collect(),
                })
                .collect(),
        }
    }

    /// `self += other`, componentwise.
    pub fn add_assign(&mut self, other: &ParameterSet) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.values
                .iter_mut()
                .zip(&b.values)
                .for_each(|(x, &y)| *x += y);
        }
        Ok(())
    }

    /// Largest absolute entry, 0 for an empty set.
    pub fn max_abs(&self) -> f32 {
        self.tensors
            .iter()
            .flat_map(|t| t.values.iter())
            .fold(0.0f32, |m, &v| m.max(v.abs()))
    }

    /// Bitwise equality of every value (distinguishes `0.0` from `-0.0`).
    pub fn bitwise_eq(&self, other: &ParameterSet) -> bool {
        self.check_compatible(other).is_ok()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.values
                    .iter()
                    .zip(&b.values)
                    .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

impl<'a> IntoIterator for &'a ParameterSet {
    type Item = &'a FlatTensor;
    type IntoIter = std::slice::Iter<'a, FlatTensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.tensors.iter()
    }
}
