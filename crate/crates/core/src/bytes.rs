//! Little helpers for the crate's binary formats.

use crate::error::{Error, Result};

/// How running out of input is reported.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Truncation {
    Corruption,
    Length,
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    truncation: Truncation,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8], truncation: Truncation) -> Self {
        ByteReader {
            buf,
            pos: 0,
            truncation,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            let msg = format!("need {n} bytes for {what}, {} left", self.remaining());
            return Err(match self.truncation {
                Truncation::Corruption => Error::corrupt(self.pos, msg),
                Truncation::Length => Error::length(self.pos, msg),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("sized"))
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    pub fn u16_le(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    pub fn u32_le(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    pub fn u64_le(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    pub fn f64_le(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    /// Reads `n` little-endian f32 values widened to f64.
    pub fn f32_block(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::corrupt(self.pos, "size overflow"))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("sized")) as f64)
            .collect())
    }
}

pub(crate) fn put_f32_block(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}
