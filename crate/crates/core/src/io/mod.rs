//! Byte-exact file formats: DRBT tensors, DRBW weight stores and binary PGM.

pub mod pgm;
pub mod tensor_file;
pub mod weights_file;

use crate::error::{format_err, Result};

/// Little-endian cursor that reports the byte offset of every failure.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(format_err(
                self.pos,
                format!(
                    "truncated {what}: need {len} bytes, {} remain",
                    self.remaining()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32_vec(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let nbytes = count
            .checked_mul(4)
            .ok_or_else(|| format_err(self.pos, format!("{what} element count overflows")))?;
        let b = self.take(nbytes, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let start = self.pos;
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(format_err(
                start,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        Ok(())
    }

    pub(crate) fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(format_err(
                self.pos,
                format!("{} trailing bytes after payload", self.remaining()),
            ));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, data: &[f32]) {
    out.reserve(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| crate::error::config(format!("{what} {v} exceeds u32 range")))
}
