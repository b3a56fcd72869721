//! XOR and additive secret sharing with purely local operations.

use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bits::Bits;
use crate::error::{Error, Result};

/// The seeded generator used for all replayable randomness.
pub type Prng = ChaCha20Rng;

/// Child generator for a named purpose, so that adding draws in one place
/// does not shift the stream used somewhere else.
pub fn derive_rng(seed: u64, label: &str) -> Prng {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    Prng::from_seed(h.finalize().into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BitShare(pub bool);

impl BitShare {
    pub fn reconstruct(self, other: BitShare) -> bool {
        self.0 ^ other.0
    }
}

/// One party's XOR share of a `width`-bit value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordShare {
    bits: Bits,
}

impl WordShare {
    pub fn new(bits: Bits) -> Self {
        WordShare { bits }
    }

    /// The share of a public constant held by one party (the other holds zeros).
    pub fn zeros(width: usize) -> Self {
        WordShare { bits: Bits::zeros(width) }
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &Bits {
        &self.bits
    }

    pub fn into_bits(self) -> Bits {
        self.bits
    }

    pub fn bit(&self, i: usize) -> BitShare {
        BitShare(self.bits.get(i))
    }

    fn check(&self, width: usize) -> Result<()> {
        if self.width() != width {
            return Err(Error::WidthMismatch { expected: self.width(), got: width });
        }
        Ok(())
    }

    pub fn xor_local(&self, other: &WordShare) -> Result<WordShare> {
        self.check(other.width())?;
        Ok(WordShare { bits: self.bits.xor(&other.bits) })
    }

    /// Only one party may fold a public constant in; `apply` is false on the other.
    pub fn xor_const(&self, c: &Bits, apply: bool) -> Result<WordShare> {
        self.check(c.len())?;
        if !apply {
            return Ok(self.clone());
        }
        Ok(WordShare { bits: self.bits.xor(c) })
    }

    /// Bitwise AND with a public constant; both parties apply it.
    pub fn and_const(&self, c: &Bits) -> Result<WordShare> {
        self.check(c.len())?;
        Ok(WordShare { bits: self.bits.and(c) })
    }

    /// Bits `[start, start + len)` as a share of that field.
    pub fn field(&self, start: usize, len: usize) -> WordShare {
        WordShare { bits: self.bits.slice(start, len) }
    }

    pub fn reconstruct(&self, other: &WordShare) -> Result<Bits> {
        self.check(other.width())?;
        Ok(self.bits.xor(&other.bits))
    }
}

pub fn share_boolean<R: RngCore + ?Sized>(secret: &Bits, rng: &mut R) -> (WordShare, WordShare) {
    let s0 = Bits::random(secret.len(), rng);
    let s1 = secret.xor(&s0);
    (WordShare::new(s0), WordShare::new(s1))
}

/// Sharing with a caller-chosen first share.
pub fn share_boolean_with(secret: &Bits, share0: &Bits) -> Result<(WordShare, WordShare)> {
    if secret.len() != share0.len() {
        return Err(Error::WidthMismatch { expected: secret.len(), got: share0.len() });
    }
    Ok((WordShare::new(share0.clone()), WordShare::new(secret.xor(share0))))
}

/// One party's additive share modulo `modulus`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArithShare {
    pub value: BigUint,
    pub modulus: BigUint,
}

impl ArithShare {
    pub fn new(value: BigUint, modulus: BigUint) -> Self {
        let value = value % &modulus;
        ArithShare { value, modulus }
    }

    fn check(&self, other: &BigUint) -> Result<()> {
        if &self.modulus != other {
            return Err(Error::ModulusMismatch);
        }
        Ok(())
    }

    pub fn add_local(&self, other: &ArithShare) -> Result<ArithShare> {
        self.check(&other.modulus)?;
        Ok(ArithShare::new(&self.value + &other.value, self.modulus.clone()))
    }

    /// As with XOR constants, only one party adds the constant.
    pub fn add_const(&self, c: &BigUint, apply: bool) -> ArithShare {
        if !apply {
            return self.clone();
        }
        ArithShare::new(&self.value + c, self.modulus.clone())
    }

    pub fn neg(&self) -> ArithShare {
        ArithShare::new(&self.modulus - &self.value, self.modulus.clone())
    }

    pub fn reconstruct(&self, other: &ArithShare) -> Result<BigUint> {
        self.check(&other.modulus)?;
        Ok((&self.value + &other.value) % &self.modulus)
    }
}

pub fn share_arith<R: RngCore + ?Sized>(
    secret: &BigUint,
    modulus: &BigUint,
    rng: &mut R,
) -> (ArithShare, ArithShare) {
    let s0 = rng.gen_biguint_below(modulus);
    let s1 = (modulus - &s0 + secret % modulus) % modulus;
    (ArithShare { value: s0, modulus: modulus.clone() }, ArithShare { value: s1, modulus: modulus.clone() })
}

/// One party's multiplicative share in `Z*_{N^2}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultShare {
    pub value: BigUint,
    pub modulus: BigUint,
}

impl MultShare {
    pub fn reconstruct(&self, other: &MultShare) -> Result<BigUint> {
        if self.modulus != other.modulus {
            return Err(Error::ModulusMismatch);
        }
        Ok(&self.value * &other.value % &self.modulus)
    }
}

/// Uniform bit.
pub fn coin<R: RngCore + ?Sized>(rng: &mut R) -> bool {
    rng.gen()
}
