//! Paillier encryption with `g = 1 + N`.
//!
//! `Enc(x; r) = (1 + N)^x * r^N mod N^2` and
//! `Dec(c) = L(c^phi mod N^2) * phi^-1 mod N` with `L(u) = (u - 1) / N`.
//! A CRT decryption path is provided for the holder of the factors and is
//! checked against the direct formula in tests.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_prime::RandPrime;
use num_traits::{One, Zero};
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n2: BigUint,
    id: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    key_id: u64,
}

#[derive(Clone, Debug)]
pub struct PaillierKeypair {
    pk: PublicKey,
    p: BigUint,
    q: BigUint,
    phi: BigUint,
    phi_inv: BigUint,
    crt: Crt,
}

#[derive(Clone, Debug)]
struct Crt {
    p2: BigUint,
    q2: BigUint,
    /// (p^2)^-1 mod q^2
    p2_inv: BigUint,
    /// phi mod phi(p^2) and mod phi(q^2), for exponentiation by phi.
    phi_p: BigUint,
    phi_q: BigUint,
    /// N mod phi(p^2) and mod phi(q^2), for exponentiation by N.
    n_p: BigUint,
    n_q: BigUint,
}

pub(crate) fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let e = BigInt::from(a.clone()).extended_gcd(&BigInt::from(m.clone()));
    if !e.gcd.is_one() {
        return None;
    }
    let m = BigInt::from(m.clone());
    Some(e.x.mod_floor(&m).to_biguint().expect("non-negative after mod_floor"))
}

fn is_prime(x: &BigUint) -> bool {
    num_prime::nt_funcs::is_prime(x, None).probably()
}

impl PublicKey {
    pub fn from_n(n: BigUint) -> PublicKey {
        let n2 = &n * &n;
        let id = u64::from_le_bytes(Sha256::digest(n.to_bytes_le()).as_slice()[..8].try_into().expect("8 bytes"));
        PublicKey { n, n2, id }
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n2
    }

    pub fn bits(&self) -> usize {
        self.n.bits() as usize
    }

    fn check(&self, c: &Ciphertext) -> Result<()> {
        if c.key_id != self.id {
            return Err(Error::KeyMismatch);
        }
        Ok(())
    }

    /// Uniform element of `Z*_N`.
    pub fn sample_r<R: RngCore + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_below(&self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    pub fn encrypt<R: RngCore + ?Sized>(&self, x: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        let r = self.sample_r(rng);
        self.encrypt_with(x, &r)
    }

    /// Encryption with caller-chosen randomness `r` in `Z*_N`.
    pub fn encrypt_with(&self, x: &BigUint, r: &BigUint) -> Result<Ciphertext> {
        if x >= &self.n {
            return Err(Error::PlaintextOutOfRange);
        }
        let gx = (BigUint::one() + x * &self.n) % &self.n2;
        Ok(Ciphertext { value: gx * r.modpow(&self.n, &self.n2) % &self.n2, key_id: self.id })
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        Ok(Ciphertext { value: &a.value * &b.value % &self.n2, key_id: self.id })
    }

    /// `c^k`, an encryption of `k * x mod N`.
    pub fn scale(&self, c: &Ciphertext, k: &BigUint) -> Result<Ciphertext> {
        self.check(c)?;
        Ok(Ciphertext { value: c.value.modpow(k, &self.n2), key_id: self.id })
    }

    /// Wraps a residue received from the wire.
    pub fn ciphertext(&self, value: BigUint) -> Result<Ciphertext> {
        if value >= self.n2 {
            return Err(Error::Malformed("ciphertext not reduced mod N^2".into()));
        }
        Ok(Ciphertext { value, key_id: self.id })
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// Whether the residue is a unit of `Z_{N^2}`.
    pub fn is_unit(&self, pk: &PublicKey) -> bool {
        self.value.gcd(&pk.n).is_one()
    }
}

impl PaillierKeypair {
    /// Fresh key with an exactly `bits`-bit modulus.
    pub fn generate<R: RngCore + ?Sized>(bits: usize, rng: &mut R) -> Result<PaillierKeypair> {
        if bits < 16 {
            return Err(Error::ConfigInvalid(format!("Paillier modulus of {bits} bits is too small")));
        }
        let half = bits / 2;
        let mut rng = RngAdapter(rng);
        loop {
            let p: BigUint = rng.gen_prime(half, None);
            let q: BigUint = rng.gen_prime(bits - half, None);
            if p == q || (&p * &q).bits() as usize != bits {
                continue;
            }
            if let Ok(kp) = PaillierKeypair::from_primes(p, q) {
                return Ok(kp);
            }
        }
    }

    /// Key from known primes; used for small fixed test keys.
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<PaillierKeypair> {
        if p == q || !is_prime(&p) || !is_prime(&q) {
            return Err(Error::ConfigInvalid("Paillier factors must be distinct primes".into()));
        }
        let n = &p * &q;
        let one = BigUint::one();
        let phi = (&p - &one) * (&q - &one);
        let phi_inv = mod_inverse(&phi, &n)
            .ok_or_else(|| Error::ConfigInvalid("gcd(N, phi(N)) != 1".into()))?;
        let p2 = &p * &p;
        let q2 = &q * &q;
        let phi_p2 = &p * (&p - &one);
        let phi_q2 = &q * (&q - &one);
        let crt = Crt {
            p2_inv: mod_inverse(&p2, &q2).expect("distinct primes"),
            phi_p: &phi % &phi_p2,
            phi_q: &phi % &phi_q2,
            n_p: &n % &phi_p2,
            n_q: &n % &phi_q2,
            p2,
            q2,
        };
        Ok(PaillierKeypair { pk: PublicKey::from_n(n), p, q, phi, phi_inv, crt })
    }

    pub fn public(&self) -> &PublicKey {
        &self.pk
    }

    pub fn factors(&self) -> (&BigUint, &BigUint) {
        (&self.p, &self.q)
    }

    pub fn phi(&self) -> &BigUint {
        &self.phi
    }

    pub fn phi_inv(&self) -> &BigUint {
        &self.phi_inv
    }

    /// The textbook formula.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint> {
        self.pk.check(c)?;
        let u = c.value.modpow(&self.phi, &self.pk.n2);
        Ok(self.finish_dec(u))
    }

    fn finish_dec(&self, u: BigUint) -> BigUint {
        let l = (u - BigUint::one()) / &self.pk.n;
        l * &self.phi_inv % &self.pk.n
    }

    /// Modular exponentiation mod N^2 via the factors; `e_p`, `e_q` are the
    /// exponent reduced mod phi(p^2), phi(q^2). Only valid for units.
    fn crt_pow(&self, base: &BigUint, e_p: &BigUint, e_q: &BigUint) -> BigUint {
        let c = &self.crt;
        let xp = (base % &c.p2).modpow(e_p, &c.p2);
        let xq = (base % &c.q2).modpow(e_q, &c.q2);
        // x = xp + p^2 * ((xq - xp) * (p^2)^-1 mod q^2)
        let diff = (&xq + &c.q2 - (&xp % &c.q2)) % &c.q2;
        xp + &c.p2 * (diff * &c.p2_inv % &c.q2)
    }

    /// Same result as [`decrypt`](Self::decrypt) for unit ciphertexts,
    /// computing `c^phi` modulo p^2 and q^2 separately.
    pub fn decrypt_crt(&self, c: &Ciphertext) -> Result<BigUint> {
        self.pk.check(c)?;
        if !c.is_unit(&self.pk) {
            return self.decrypt(c);
        }
        let u = self.crt_pow(&c.value, &self.crt.phi_p, &self.crt.phi_q);
        Ok(self.finish_dec(u))
    }

    /// Encryption by the key owner, with `r^N` computed via CRT.
    pub fn encrypt<R: RngCore + ?Sized>(&self, x: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        if x >= &self.pk.n {
            return Err(Error::PlaintextOutOfRange);
        }
        let r = self.pk.sample_r(rng);
        let rn = self.crt_pow(&r, &self.crt.n_p, &self.crt.n_q);
        let gx = (BigUint::one() + x * &self.pk.n) % &self.pk.n2;
        Ok(Ciphertext { value: gx * rn % &self.pk.n2, key_id: self.pk.id })
    }
}

/// Lets `num_prime` draw from a `?Sized` generator.
struct RngAdapter<'a, R: RngCore + ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::Prng;
    use rand::SeedableRng;

    fn toy() -> PaillierKeypair {
        PaillierKeypair::from_primes(5u32.into(), 7u32.into()).unwrap()
    }

    #[test]
    fn toy_key_constants() {
        let k = toy();
        assert_eq!(k.public().n(), &BigUint::from(35u32));
        assert_eq!(k.public().n_squared(), &BigUint::from(1225u32));
        assert_eq!(k.phi(), &BigUint::from(24u32));
        assert_eq!(k.phi_inv(), &BigUint::from(19u32));
        assert!(PaillierKeypair::from_primes(5u32.into(), 5u32.into()).is_err());
        assert!(PaillierKeypair::from_primes(4u32.into(), 7u32.into()).is_err());
    }

    #[test]
    fn toy_key_homomorphic_sum() {
        let k = toy();
        let pk = k.public();
        let mut rng = Prng::seed_from_u64(1);
        let c = pk.add(&pk.encrypt(&2u32.into(), &mut rng).unwrap(), &pk.encrypt(&3u32.into(), &mut rng).unwrap()).unwrap();
        assert_eq!(k.decrypt(&c).unwrap(), BigUint::from(5u32));
        let zero = pk.encrypt_with(&BigUint::zero(), &BigUint::one()).unwrap();
        assert_eq!(zero.value(), &BigUint::one());
        assert_eq!(k.decrypt(&zero).unwrap(), BigUint::zero());
    }

    #[test]
    fn toy_key_exhaustive() {
        let k = toy();
        let pk = k.public();
        for x in 0..35u32 {
            for r in (1..35u32).filter(|r| r % 5 != 0 && r % 7 != 0) {
                let c = pk.encrypt_with(&x.into(), &r.into()).unwrap();
                assert!(c.is_unit(pk));
                assert_eq!(k.decrypt(&c).unwrap(), BigUint::from(x));
                assert_eq!(k.decrypt_crt(&c).unwrap(), BigUint::from(x));
            }
        }
        assert_eq!(pk.encrypt_with(&35u32.into(), &BigUint::one()), Err(Error::PlaintextOutOfRange));
    }

    #[test]
    fn generated_512_roundtrip_and_homomorphisms() {
        let mut rng = Prng::seed_from_u64(2);
        let k = PaillierKeypair::generate(512, &mut rng).unwrap();
        let pk = k.public();
        assert_eq!(pk.bits(), 512);
        for _ in 0..100 {
            let x = rng.gen_biguint_below(pk.n());
            let y = rng.gen_biguint_below(pk.n());
            let a = rng.gen_biguint_below(pk.n());
            let cx = pk.encrypt(&x, &mut rng).unwrap();
            let cy = k.encrypt(&y, &mut rng).unwrap();
            assert_eq!(k.decrypt(&cx).unwrap(), x);
            assert_eq!(k.decrypt_crt(&cy).unwrap(), y);
            assert_eq!(k.decrypt(&pk.add(&cx, &cy).unwrap()).unwrap(), (&x + &y) % pk.n());
            assert_eq!(k.decrypt_crt(&pk.scale(&cx, &a).unwrap()).unwrap(), &x * &a % pk.n());
        }
        let cx = pk.encrypt(&7u32.into(), &mut rng).unwrap();
        assert_eq!(k.decrypt(&pk.scale(&cx, &BigUint::one()).unwrap()).unwrap(), BigUint::from(7u32));
        assert_eq!(k.decrypt(&pk.scale(&cx, &BigUint::zero()).unwrap()).unwrap(), BigUint::zero());
    }

    #[test]
    fn mixing_keys_is_rejected() {
        let mut rng = Prng::seed_from_u64(3);
        let a = PaillierKeypair::generate(64, &mut rng).unwrap();
        let b = PaillierKeypair::generate(64, &mut rng).unwrap();
        let ca = a.public().encrypt(&1u32.into(), &mut rng).unwrap();
        let cb = b.public().encrypt(&1u32.into(), &mut rng).unwrap();
        assert_eq!(a.public().add(&ca, &cb), Err(Error::KeyMismatch));
        assert_eq!(b.decrypt(&ca), Err(Error::KeyMismatch));
    }
}
