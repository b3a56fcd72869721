//! Message encoding.
//!
//! Bit vectors are packed LSB-first into `ceil(len / 8)` bytes. Residues
//! modulo `n` are fixed-width big-endian in `ceil(bits(n) / 8)` bytes, so
//! message sizes depend only on public parameters.

use num_bigint::BigUint;

use crate::bits::Bits;
use crate::error::{Error, Result};

/// Bytes used to encode a residue modulo `n`.
pub fn residue_len(modulus: &BigUint) -> usize {
    (modulus.bits() as usize).div_ceil(8).max(1)
}

/// Bytes used to encode an integer in `[0, k)`.
pub fn index_len(k: u64) -> usize {
    let bits = 64 - k.saturating_sub(1).leading_zeros() as usize;
    bits.div_ceil(8).max(1)
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn bits(&mut self, b: &Bits) -> &mut Self {
        self.buf.extend_from_slice(&b.to_bytes());
        self
    }

    pub fn residue(&mut self, x: &BigUint, modulus: &BigUint) -> &mut Self {
        let width = residue_len(modulus);
        let bytes = if x.bits() == 0 { Vec::new() } else { x.to_bytes_be() };
        assert!(bytes.len() <= width, "residue wider than its modulus");
        self.buf.resize(self.buf.len() + width - bytes.len(), 0);
        self.buf.extend_from_slice(&bytes);
        self
    }

    /// Big-endian integer in `[0, k)`.
    pub fn index(&mut self, x: u64, k: u64) -> &mut Self {
        let width = index_len(k);
        self.buf.extend_from_slice(&x.to_be_bytes()[8 - width..]);
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Malformed(format!(
                "need {n} bytes at offset {}, message has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn bits(&mut self, len: usize) -> Result<Bits> {
        Ok(Bits::from_bytes(self.take(len.div_ceil(8))?, len))
    }

    pub fn residue(&mut self, modulus: &BigUint) -> Result<BigUint> {
        let v = BigUint::from_bytes_be(self.take(residue_len(modulus))?);
        if &v >= modulus {
            return Err(Error::Malformed("residue not reduced".into()));
        }
        Ok(v)
    }

    pub fn index(&mut self, k: u64) -> Result<u64> {
        let width = index_len(k);
        let mut buf = [0u8; 8];
        buf[8 - width..].copy_from_slice(self.take(width)?);
        let v = u64::from_be_bytes(buf);
        if v >= k {
            return Err(Error::Malformed(format!("index {v} not below {k}")));
        }
        Ok(v)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}
