//! Packed bit vectors.
//!
//! Bit `i` lives in word `i / 64` at position `i % 64`. Byte encodings are
//! LSB-first: bit `i` is bit `i % 8` of byte `i / 8`. Bits past `len` in the
//! last word are always zero.

use std::fmt;

use num_bigint::BigUint;
use rand::RngCore;

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Bits {
    len: usize,
    words: Vec<u64>,
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl Bits {
    pub fn zeros(len: usize) -> Self {
        Bits { len, words: vec![0; words_for(len)] }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Bits { len, words: vec![u64::MAX; words_for(len)] };
        b.trim();
        b
    }

    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut b = Bits { len, words: (0..words_for(len)).map(|_| rng.next_u64()).collect() };
        b.trim();
        b
    }

    /// Low `len` bits of `v`.
    pub fn from_u64(v: u64, len: usize) -> Self {
        let mut b = Bits::zeros(len);
        if len > 0 {
            b.words[0] = v;
        }
        b.trim();
        b
    }

    pub fn from_u128(v: u128, len: usize) -> Self {
        let mut b = Bits::zeros(len);
        if len > 0 {
            b.words[0] = v as u64;
        }
        if len > 64 {
            b.words[1] = (v >> 64) as u64;
        }
        b.trim();
        b
    }

    /// Takes `len` bits from packed words.
    pub fn from_words(words: &[u64], len: usize) -> Self {
        let mut b = Bits { len, words: words[..words_for(len)].to_vec() };
        b.trim();
        b
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Bits::zeros(bits.len());
        for (i, &x) in bits.iter().enumerate() {
            b.set(i, x);
        }
        b
    }

    /// Low `len` bits of `v`.
    pub fn from_biguint(v: &BigUint, len: usize) -> Self {
        let mut b = Bits::zeros(len);
        for (i, w) in v.iter_u64_digits().enumerate().take(b.words.len()) {
            b.words[i] = w;
        }
        b.trim();
        b
    }

    pub fn to_biguint(&self) -> BigUint {
        let mut bytes = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        BigUint::from_bytes_le(&bytes)
    }

    /// The first 64 bits as an integer.
    pub fn to_u64(&self) -> u64 {
        self.words.first().copied().unwrap_or(0)
    }

    pub fn to_u128(&self) -> u128 {
        let lo = self.words.first().copied().unwrap_or(0) as u128;
        let hi = self.words.get(1).copied().unwrap_or(0) as u128;
        lo | hi << 64
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Positions of the set bits, ascending.
    pub fn ones_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    /// Panics if the lengths differ; callers that take user input check first.
    pub fn xor_assign(&mut self, other: &Bits) {
        assert_eq!(self.len, other.len, "xor of bit vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn and_assign(&mut self, other: &Bits) {
        assert_eq!(self.len, other.len, "and of bit vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn xor(&self, other: &Bits) -> Bits {
        let mut r = self.clone();
        r.xor_assign(other);
        r
    }

    pub fn and(&self, other: &Bits) -> Bits {
        let mut r = self.clone();
        r.and_assign(other);
        r
    }

    pub fn not(&self) -> Bits {
        let mut r = Bits { len: self.len, words: self.words.iter().map(|w| !w).collect() };
        r.trim();
        r
    }

    /// Bits `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Bits {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = Bits::zeros(len);
        let shift = start % 64;
        let first = start / 64;
        for (k, w) in out.words.iter_mut().enumerate() {
            let lo = self.words.get(first + k).copied().unwrap_or(0);
            let hi = self.words.get(first + k + 1).copied().unwrap_or(0);
            *w = if shift == 0 { lo } else { lo >> shift | hi << (64 - shift) };
        }
        out.trim();
        out
    }

    /// Overwrites bits `[start, start + src.len())` with `src`.
    pub fn write(&mut self, start: usize, src: &Bits) {
        assert!(start + src.len <= self.len, "write out of range");
        if start % 64 == 0 {
            let first = start / 64;
            let full = src.len / 64;
            self.words[first..first + full].copy_from_slice(&src.words[..full]);
            for i in full * 64..src.len {
                self.set(start + i, src.get(i));
            }
            return;
        }
        for i in 0..src.len {
            self.set(start + i, src.get(i));
        }
    }

    /// XORs `src` into bits `[start, start + src.len())`.
    pub fn xor_at(&mut self, start: usize, src: &Bits) {
        assert!(start + src.len <= self.len, "xor_at out of range");
        if start % 64 == 0 {
            let first = start / 64;
            for (a, b) in self.words[first..].iter_mut().zip(&src.words) {
                *a ^= b;
            }
            return;
        }
        for i in src.ones_positions() {
            self.flip(start + i);
        }
    }

    pub fn push(&mut self, v: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, v);
    }

    pub fn extend(&mut self, other: &Bits) {
        let start = self.len;
        self.len += other.len;
        self.words.resize(words_for(self.len), 0);
        self.write(start, other);
    }

    pub fn concat<'a, I: IntoIterator<Item = &'a Bits>>(parts: I) -> Bits {
        let mut out = Bits::zeros(0);
        for p in parts {
            out.extend(p);
        }
        out
    }

    /// Zero-extends or truncates to `len` bits.
    pub fn resized(&self, len: usize) -> Bits {
        let mut out = Bits::zeros(len);
        let n = out.words.len().min(self.words.len());
        out.words[..n].copy_from_slice(&self.words[..n]);
        out.trim();
        out
    }

    /// LSB-first packing into `ceil(len / 8)` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(self.len.div_ceil(8));
        out
    }

    /// Inverse of [`Bits::to_bytes`]; stray bits past `len` are dropped.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        let mut b = Bits::zeros(len);
        for (i, chunk) in bytes.chunks(8).enumerate().take(b.words.len()) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            b.words[i] = u64::from_le_bytes(buf);
        }
        b.trim();
        b
    }

    fn trim(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits[{}](", self.len)?;
        for i in (0..self.len).rev() {
            write!(f, "{}", self.get(i) as u8)?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_order_is_lsb_first() {
        let b = Bits::from_u64(0b1_0000_0011, 9);
        assert_eq!(b.to_bytes(), vec![0b0000_0011, 0b1]);
        assert_eq!(Bits::from_bytes(&[3, 1], 9), b);
    }

    #[test]
    fn ones_trims_tail() {
        let b = Bits::ones(70);
        assert_eq!(b.count_ones(), 70);
        assert_eq!(b.not().count_ones(), 0);
    }

    proptest! {
        #[test]
        fn slice_write_roundtrip(v in proptest::collection::vec(any::<bool>(), 1..300), s in 0usize..300, l in 0usize..300) {
            let b = Bits::from_bools(&v);
            let s = s % b.len();
            let l = l % (b.len() - s + 1);
            let piece = b.slice(s, l);
            for i in 0..l {
                prop_assert_eq!(piece.get(i), v[s + i]);
            }
            let mut z = Bits::zeros(b.len());
            z.write(s, &piece);
            let mut x = Bits::zeros(b.len());
            x.xor_at(s, &piece);
            prop_assert_eq!(&z, &x);
            prop_assert_eq!(z.slice(s, l), piece);
        }

        #[test]
        fn bytes_and_biguint_roundtrip(v in proptest::collection::vec(any::<bool>(), 0..200)) {
            let b = Bits::from_bools(&v);
            prop_assert_eq!(Bits::from_bytes(&b.to_bytes(), b.len()), b.clone());
            prop_assert_eq!(Bits::from_biguint(&b.to_biguint(), b.len()), b.clone());
            let ones: Vec<usize> = b.ones_positions().collect();
            let expect: Vec<usize> = v.iter().enumerate().filter(|(_, x)| **x).map(|(i, _)| i).collect();
            prop_assert_eq!(ones, expect);
        }

        #[test]
        fn extend_matches_bool_concat(a in proptest::collection::vec(any::<bool>(), 0..150), b in proptest::collection::vec(any::<bool>(), 0..150)) {
            let mut x = Bits::from_bools(&a);
            x.extend(&Bits::from_bools(&b));
            let mut all = a.clone();
            all.extend(&b);
            prop_assert_eq!(x, Bits::from_bools(&all));
        }
    }
}
