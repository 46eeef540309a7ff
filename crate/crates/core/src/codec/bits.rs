//! Append-only bit buffer, most-significant bit first within each byte.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitStream {
    bytes: Vec<u8>,
    len: usize,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a stream from its byte-packed form. Padding bits after
    /// `bit_len` must be zero.
    pub fn from_bytes(bytes: Vec<u8>, bit_len: usize) -> Result<Self> {
        let needed = bit_len.div_ceil(8);
        if bytes.len() != needed {
            return Err(Error::corrupt(
                0,
                format!("{bit_len} bits need {needed} bytes, got {}", bytes.len()),
            ));
        }
        if !bit_len.is_multiple_of(8) {
            let pad_mask = 0xFFu8 >> (bit_len % 8);
            if bytes[needed - 1] & pad_mask != 0 {
                return Err(Error::corrupt(needed - 1, "nonzero padding bits"));
            }
        }
        Ok(Self {
            bytes,
            len: bit_len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Byte-packed form, final partial byte zero-padded.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.len).then(|| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn push(&mut self, bit: bool) {
        let off = self.len % 8;
        if off == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> off;
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u8) {
        debug_assert!(width <= 64);
        for shift in (0..width).rev() {
            self.push((value >> shift) & 1 == 1);
        }
    }

    /// Appends `n` one-bits.
    pub fn push_ones(&mut self, mut n: u64) {
        while n > 0 && !self.len.is_multiple_of(8) {
            self.push(true);
            n -= 1;
        }
        while n >= 8 {
            self.bytes.push(0xFF);
            self.len += 8;
            n -= 8;
        }
        for _ in 0..n {
            self.push(true);
        }
    }

    /// Unary code of `q`: `q` ones and a terminating zero.
    pub fn push_unary(&mut self, q: u64) {
        self.push_ones(q);
        self.push(false);
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader {
            stream: self,
            pos: 0,
        }
    }
}

pub struct BitReader<'a> {
    stream: &'a BitStream,
    pos: usize,
}

impl BitReader<'_> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.stream.len - self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        let bit = self.stream.get(self.pos)?;
        self.pos += 1;
        Some(bit)
    }

    pub fn read_bits(&mut self, width: u8) -> Option<u64> {
        if self.remaining() < width as usize {
            return None;
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Some(v)
    }

    /// Counts one-bits up to and including the next zero.
    pub fn read_unary(&mut self) -> Option<u64> {
        let mut q = 0u64;
        loop {
            if self.pos >= self.stream.len {
                return None;
            }
            let off = self.pos % 8;
            let avail = (8 - off).min(self.stream.len - self.pos);
            let ones =
                ((self.stream.bytes[self.pos / 8] << off).leading_ones() as usize).min(avail);
            q += ones as u64;
            self.pos += ones;
            if ones < avail {
                self.pos += 1;
                return Some(q);
            }
        }
    }
}
