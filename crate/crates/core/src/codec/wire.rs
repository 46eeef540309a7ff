//! Byte layout of per-tensor messages and round payloads.
//!
//! ```text
//! round    := u16 message-count, message*
//! message  := u8 name-length, name bytes, u32 tensor-length, u32 count,
//!             u8 flags, f32 mean, u8 b*, u32 payload-bit-length,
//!             payload bytes (zero padded), [count x f32 values]
//! flags    := bit0 sign (1 = negative), bit1 explicit values, bit2 dense
//! ```
//!
//! All multi-byte fields are little-endian. A sparse binary update uses
//! neither bit1 nor bit2. With bit1 the explicit values follow the payload.
//! With bit2 the payload holds the raw `f32` values and `count` equals the
//! tensor length.

use super::bits::BitStream;
use super::golomb::{decode_positions, encode_positions};
use crate::compress::{DenseUpdate, Sign, SparseBinaryUpdate, SparseValueUpdate, TensorUpdate};
use crate::error::{Error, Result};
use crate::tensor::ParameterSet;

const FLAG_NEGATIVE: u8 = 0b001;
const FLAG_VALUES: u8 = 0b010;
const FLAG_DENSE: u8 = 0b100;

/// Fixed header bytes, excluding the name.
pub const HEADER_FIXED_BYTES: usize = 1 + 4 + 4 + 1 + 4 + 1 + 4;
pub const ROUND_PREFIX_BYTES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Binary,
    SparseValues,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageHeader {
    pub tensor_name: String,
    pub tensor_length: u32,
    pub count: u32,
    pub kind: PayloadKind,
    pub sign: Sign,
    pub mean: f32,
    pub b_star: u8,
}

impl MessageHeader {
    fn flags(&self) -> u8 {
        let mut f = match self.kind {
            PayloadKind::Binary => 0,
            PayloadKind::SparseValues => FLAG_VALUES,
            PayloadKind::Dense => FLAG_DENSE,
        };
        if self.sign == Sign::Negative {
            f |= FLAG_NEGATIVE;
        }
        f
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_FIXED_BYTES + self.tensor_name.len()
    }
}

/// One tensor's update in wire form.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMessage {
    pub header: MessageHeader,
    pub payload: BitStream,
    /// Explicit values, present only for [`PayloadKind::SparseValues`].
    pub values: Vec<f32>,
}

impl EncodedMessage {
    /// Serialized size in bytes.
    pub fn byte_len(&self) -> usize {
        self.header.encoded_len() + self.payload.as_bytes().len() + 4 * self.values.len()
    }

    pub fn bit_len(&self) -> u64 {
        8 * self.byte_len() as u64
    }

    pub fn write_into(&self, out: &mut Vec<u8>) {
        let h = &self.header;
        out.push(h.tensor_name.len() as u8);
        out.extend_from_slice(h.tensor_name.as_bytes());
        out.extend_from_slice(&h.tensor_length.to_le_bytes());
        out.extend_from_slice(&h.count.to_le_bytes());
        out.push(h.flags());
        out.extend_from_slice(&h.mean.to_le_bytes());
        out.push(h.b_star);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(self.payload.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        self.write_into(&mut out);
        out
    }

    /// Parses one message starting at `cursor.offset`.
    pub fn read_from(cursor: &mut Cursor<'_>) -> Result<Self> {
        let name_len = cursor.u8()? as usize;
        let name_at = cursor.offset;
        let tensor_name = String::from_utf8(cursor.take(name_len)?.to_vec())
            .map_err(|_| Error::corrupt(name_at, "tensor name is not UTF-8"))?;
        let tensor_length = cursor.u32()?;
        let count = cursor.u32()?;
        let flags_at = cursor.offset;
        let flags = cursor.u8()?;
        if flags & !(FLAG_NEGATIVE | FLAG_VALUES | FLAG_DENSE) != 0
            || flags & (FLAG_VALUES | FLAG_DENSE) == (FLAG_VALUES | FLAG_DENSE)
        {
            return Err(Error::corrupt(
                flags_at,
                format!("invalid flags {flags:#04x}"),
            ));
        }
        let mean = cursor.f32()?;
        let b_star = cursor.u8()?;
        let bit_len = cursor.u32()? as usize;
        let payload_at = cursor.offset;
        let bytes = cursor.take(bit_len.div_ceil(8))?.to_vec();
        let payload = BitStream::from_bytes(bytes, bit_len).map_err(|e| match e {
            Error::Corrupt { offset, reason } => Error::corrupt(payload_at + offset, reason),
            other => other,
        })?;
        let kind = if flags & FLAG_DENSE != 0 {
            PayloadKind::Dense
        } else if flags & FLAG_VALUES != 0 {
            PayloadKind::SparseValues
        } else {
            PayloadKind::Binary
        };
        let values = if kind == PayloadKind::SparseValues {
            (0..count).map(|_| cursor.f32()).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let sign = if flags & FLAG_NEGATIVE != 0 {
            Sign::Negative
        } else {
            Sign::Positive
        };
        Ok(Self {
            header: MessageHeader {
                tensor_name,
                tensor_length,
                count,
                kind,
                sign,
                mean,
                b_star,
            },
            payload,
            values,
        })
    }
}

/// Little-endian reader over a byte slice that tracks its offset for errors.
pub struct Cursor<'a> {
    bytes: &'a [u8],
    pub offset: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    pub fn is_at_end(&self) -> bool {
        self.offset == self.bytes.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .offset
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::corrupt(
                    self.offset,
                    format!("need {n} bytes, {} left", self.bytes.len() - self.offset),
                )
            })?;
        let out = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.len() > u8::MAX as usize {
        return Err(Error::shape(name, "tensor name longer than 255 bytes"));
    }
    Ok(())
}

/// Encodes a sparse binary update with remainder width `b_star`.
pub fn encode(update: &SparseBinaryUpdate, b_star: u8) -> Result<EncodedMessage> {
    check_name(&update.tensor_name)?;
    update.validate()?;
    Ok(EncodedMessage {
        header: MessageHeader {
            tensor_name: update.tensor_name.clone(),
            tensor_length: update.tensor_length,
            count: update.positions.len() as u32,
            kind: PayloadKind::Binary,
            sign: update.sign,
            mean: update.mean,
            b_star,
        },
        payload: encode_positions(&update.positions, b_star)?,
        values: Vec::new(),
    })
}

/// Inverse of [`encode`].
pub fn decode(msg: &EncodedMessage) -> Result<SparseBinaryUpdate> {
    match decode_update(msg)? {
        TensorUpdate::Binary(u) => Ok(u),
        _ => Err(Error::corrupt(0, "expected a sparse binary message")),
    }
}

pub fn encode_update(update: &TensorUpdate, b_star: u8) -> Result<EncodedMessage> {
    check_name(update.tensor_name())?;
    match update {
        TensorUpdate::Binary(u) => encode(u, b_star),
        TensorUpdate::Sparse(u) => {
            u.validate()?;
            Ok(EncodedMessage {
                header: MessageHeader {
                    tensor_name: u.tensor_name.clone(),
                    tensor_length: u.tensor_length,
                    count: u.positions.len() as u32,
                    kind: PayloadKind::SparseValues,
                    sign: Sign::Positive,
                    mean: 0.0,
                    b_star,
                },
                payload: encode_positions(&u.positions, b_star)?,
                values: u.values.clone(),
            })
        }
        TensorUpdate::Dense(u) => {
            let len = u32::try_from(u.values.len())
                .map_err(|_| Error::shape(&u.tensor_name, "tensor longer than u32::MAX"))?;
            let bytes: Vec<u8> = u.values.iter().flat_map(|v| v.to_le_bytes()).collect();
            let bit_len = 8 * bytes.len();
            Ok(EncodedMessage {
                header: MessageHeader {
                    tensor_name: u.tensor_name.clone(),
                    tensor_length: len,
                    count: len,
                    kind: PayloadKind::Dense,
                    sign: Sign::Positive,
                    mean: 0.0,
                    b_star: 0,
                },
                payload: BitStream::from_bytes(bytes, bit_len)?,
                values: Vec::new(),
            })
        }
    }
}

pub fn decode_update(msg: &EncodedMessage) -> Result<TensorUpdate> {
    let h = &msg.header;
    match h.kind {
        PayloadKind::Binary => {
            if h.mean.is_nan() || h.mean < 0.0 {
                return Err(Error::corrupt(0, format!("negative mean {}", h.mean)));
            }
            let positions =
                decode_positions(&msg.payload, h.b_star, h.count as usize, h.tensor_length)?;
            Ok(TensorUpdate::Binary(SparseBinaryUpdate {
                tensor_name: h.tensor_name.clone(),
                tensor_length: h.tensor_length,
                positions,
                mean: h.mean,
                sign: h.sign,
            }))
        }
        PayloadKind::SparseValues => {
            let positions =
                decode_positions(&msg.payload, h.b_star, h.count as usize, h.tensor_length)?;
            Ok(TensorUpdate::Sparse(SparseValueUpdate {
                tensor_name: h.tensor_name.clone(),
                tensor_length: h.tensor_length,
                positions,
                values: msg.values.clone(),
            }))
        }
        PayloadKind::Dense => {
            if h.count != h.tensor_length || msg.payload.len() != 32 * h.count as usize {
                return Err(Error::corrupt(
                    0,
                    format!(
                        "dense message with {} values, {} payload bits",
                        h.count,
                        msg.payload.len()
                    ),
                ));
            }
            let values = msg
                .payload
                .as_bytes()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            Ok(TensorUpdate::Dense(DenseUpdate {
                tensor_name: h.tensor_name.clone(),
                values,
            }))
        }
    }
}

/// Concatenates per-tensor messages behind a 16-bit count.
pub fn encode_round(messages: &[EncodedMessage]) -> Result<Vec<u8>> {
    let count = u16::try_from(messages.len())
        .map_err(|_| Error::Config(format!("{} messages exceed the u16 count", messages.len())))?;
    let mut out = Vec::with_capacity(
        ROUND_PREFIX_BYTES + messages.iter().map(EncodedMessage::byte_len).sum::<usize>(),
    );
    out.extend_from_slice(&count.to_le_bytes());
    for m in messages {
        m.write_into(&mut out);
    }
    Ok(out)
}

pub fn decode_round(bytes: &[u8]) -> Result<Vec<EncodedMessage>> {
    let mut cursor = Cursor::new(bytes);
    let count = cursor.u16()?;
    let messages = (0..count)
        .map(|_| EncodedMessage::read_from(&mut cursor))
        .collect::<Result<Vec<_>>>()?;
    if !cursor.is_at_end() {
        return Err(Error::corrupt(
            cursor.offset,
            "trailing bytes after last message",
        ));
    }
    Ok(messages)
}

/// Size of the round payload a client sends when transmitting every tensor
/// of `params` uncompressed.
pub fn dense_round_bits(params: &ParameterSet) -> u64 {
    let bytes: usize = ROUND_PREFIX_BYTES
        + params
            .iter()
            .map(|t| HEADER_FIXED_BYTES + t.name().len() + 4 * t.len())
            .sum::<usize>();
    8 * bytes as u64
}
