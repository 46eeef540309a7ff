//! Reader and writer for the IDX format used by MNIST-style datasets.
//!
//! Layout: two zero bytes, a type code, the number of dimensions, one
//! big-endian `u32` per dimension, then the data in big-endian row-major
//! order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::train::data::{Dataset, Targets};

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    I8(Vec<i8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl IdxData {
    fn type_code(&self) -> u8 {
        match self {
            IdxData::U8(_) => 0x08,
            IdxData::I8(_) => 0x09,
            IdxData::I16(_) => 0x0B,
            IdxData::I32(_) => 0x0C,
            IdxData::F32(_) => 0x0D,
            IdxData::F64(_) => 0x0E,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IdxData::U8(v) => v.len(),
            IdxData::I8(v) => v.len(),
            IdxData::I16(v) => v.len(),
            IdxData::I32(v) => v.len(),
            IdxData::F32(v) => v.len(),
            IdxData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            IdxData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            IdxData::I8(v) => v.iter().map(|&x| x as f32).collect(),
            IdxData::I16(v) => v.iter().map(|&x| x as f32).collect(),
            IdxData::I32(v) => v.iter().map(|&x| x as f32).collect(),
            IdxData::F32(v) => v.clone(),
            IdxData::F64(v) => v.iter().map(|&x| x as f32).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: IdxData,
}

fn err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Idx {
        offset,
        reason: reason.into(),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(err(
            bytes.len(),
            "file shorter than the 4-byte magic number",
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(err(0, "magic number must start with two zero bytes"));
    }
    let code = bytes[2];
    let width = match code {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        other => return Err(err(2, format!("unknown type code {other:#04x}"))),
    };
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(err(
            bytes.len(),
            format!("header needs {rank} dimension fields"),
        ));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| err(4, "dimension product overflows"))?;
    let body = &bytes[header..];
    let expected = count
        .checked_mul(width)
        .ok_or_else(|| err(4, "data size overflows"))?;
    if body.len() != expected {
        return Err(err(
            header + body.len().min(expected),
            format!("expected {expected} data bytes, found {}", body.len()),
        ));
    }
    let data = match code {
        0x08 => IdxData::U8(body.to_vec()),
        0x09 => IdxData::I8(body.iter().map(|&b| b as i8).collect()),
        0x0B => IdxData::I16(
            body.chunks_exact(2)
                .map(|c| i16::from_be_bytes([c[0], c[1]]))
                .collect(),
        ),
        0x0C => IdxData::I32(
            body.chunks_exact(4)
                .map(|c| i32::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        0x0D => IdxData::F32(
            body.chunks_exact(4)
                .map(|c| f32::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        _ => IdxData::F64(
            body.chunks_exact(8)
                .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(IdxArray { dims, data })
}

pub fn write_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, array.data.type_code(), array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    match &array.data {
        IdxData::U8(v) => out.extend_from_slice(v),
        IdxData::I8(v) => out.extend(v.iter().map(|&x| x as u8)),
        IdxData::I16(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::I32(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::F32(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::F64(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
    }
    out
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

/// Builds a classification dataset from an image file and a label file.
/// `u8` pixels are scaled to `[0, 1]`.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_idx(images)?;
    let labels = read_idx(labels)?;
    idx_to_dataset(&images, &labels)
}

pub fn idx_to_dataset(images: &IdxArray, labels: &IdxArray) -> Result<Dataset> {
    let rows = *images
        .dims
        .first()
        .ok_or_else(|| err(3, "image file has no dimensions"))?;
    if labels.dims != [rows] {
        return Err(err(
            4,
            format!("label dims {:?} do not match {rows} images", labels.dims),
        ));
    }
    let n_features = images.dims[1..].iter().product::<usize>().max(1);
    let mut features = images.data.to_f32();
    if matches!(images.data, IdxData::U8(_)) {
        features.iter_mut().for_each(|v| *v /= 255.0);
    }
    let labels: Vec<u32> = labels
        .data
        .to_f32()
        .into_iter()
        .map(|v| {
            if v >= 0.0 {
                Ok(v as u32)
            } else {
                Err(err(4, "negative label"))
            }
        })
        .collect::<Result<_>>()?;
    let n_classes = labels.iter().max().map_or(1, |&m| m as usize + 1);
    Dataset::new(features, n_features, Targets::Classes { labels, n_classes })
}
