//! Little-endian byte reader/writer shared by the binary file formats.
//!
//! The reader tracks its offset so every decode failure can name the byte
//! position where it happened, and it refuses any length prefix that would
//! read past the end of the buffer before allocating.

use crate::error::{Error, Result};

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.pos,
                format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.remaining()
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::format(
                at,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        let at = self.pos;
        let b = self.take(4, what)?;
        let v = f32::from_le_bytes(b.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(at, format!("non-finite {what}")));
        }
        Ok(v)
    }

    /// Reads `count` elements of `width` bytes each after checking the buffer
    /// actually holds them.
    fn ensure(&self, count: usize, width: usize, what: &str) -> Result<()> {
        let need = count.checked_mul(width).ok_or_else(|| {
            Error::format(self.pos, format!("{what} length overflows"))
        })?;
        if need > self.remaining() {
            return Err(Error::format(
                self.pos,
                format!(
                    "truncated while reading {what}: need {need} bytes, {} left",
                    self.remaining()
                ),
            ));
        }
        Ok(())
    }

    pub fn f32_vec(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        self.ensure(count, 4, what)?;
        (0..count).map(|_| self.f32(what)).collect()
    }

    pub fn u32_vec(&mut self, count: usize, what: &str) -> Result<Vec<u32>> {
        self.ensure(count, 4, what)?;
        (0..count).map(|_| self.u32(what)).collect()
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(
                self.pos,
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32_slice(&mut self, v: &[f32]) {
        for x in v {
            self.f32(*x);
        }
    }

    pub fn u32_slice(&mut self, v: &[u32]) {
        for x in v {
            self.u32(*x);
        }
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}
