//! Two-key distributed point function over `[0, m)` with one-bit outputs.
//!
//! GGM tree construction: each level expands a seed into two child seeds
//! and control bits, and a per-level correction word keeps the two keys'
//! seeds equal off the path to `alpha` and independent on it. The PRG is
//! AES-128 in fixed-key Matyas-Meyer-Oseas mode, one key per child.

use std::sync::OnceLock;

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::RngCore;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::prf::index_bits;

/// Seed size in bits.
pub const KAPPA: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrectionWord {
    pub seed: u128,
    pub t_left: bool,
    pub t_right: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpfKey {
    pub party: u8,
    pub m: u64,
    pub root: u128,
    pub cws: Vec<CorrectionWord>,
    pub out_cw: bool,
}

fn prg_keys() -> &'static (Aes128, Aes128) {
    static KEYS: OnceLock<(Aes128, Aes128)> = OnceLock::new();
    KEYS.get_or_init(|| {
        let k0: [u8; 16] = *b"dpf-prg-left-key";
        let k1: [u8; 16] = *b"dpf-prg-rightkey";
        (Aes128::new(&k0.into()), Aes128::new(&k1.into()))
    })
}

/// `(seed, control)` pairs for the left and right children of each seed.
/// The control bit is the seed's low bit, which is then cleared.
fn expand(seeds: &[u128]) -> (Vec<(u128, bool)>, Vec<(u128, bool)>) {
    let (kl, kr) = prg_keys();
    let to_blocks = |v: &[u128]| -> Vec<aes::Block> { v.iter().map(|s| s.to_le_bytes().into()).collect() };
    let mut l = to_blocks(seeds);
    let mut r = l.clone();
    kl.encrypt_blocks(&mut l);
    kr.encrypt_blocks(&mut r);
    let split = |blocks: Vec<aes::Block>| -> Vec<(u128, bool)> {
        blocks
            .iter()
            .zip(seeds)
            .map(|(b, s)| {
                let v = u128::from_le_bytes((*b).into()) ^ s;
                (v & !1, v & 1 == 1)
            })
            .collect()
    };
    (split(l), split(r))
}

/// Leaf output bit of a final seed.
fn convert(seed: u128) -> bool {
    seed >> 1 & 1 == 1
}

/// Path bit of `x` at `level`, most significant first.
fn path_bit(x: u64, level: usize, depth: usize) -> bool {
    x >> (depth - 1 - level) & 1 == 1
}

fn random_seed<R: RngCore + ?Sized>(rng: &mut R) -> u128 {
    ((rng.next_u64() as u128) << 64 | rng.next_u64() as u128) & !1
}

/// Keys for `f(alpha) = beta`, `f(x) = 0` elsewhere on `[0, m)`.
pub fn dpf_gen<R: RngCore + ?Sized>(alpha: u64, beta: bool, m: u64, rng: &mut R) -> Result<(DpfKey, DpfKey)> {
    if alpha >= m {
        return Err(Error::IndexOutOfRange { index: alpha, size: m });
    }
    let depth = index_bits(m);
    let roots = [random_seed(rng), random_seed(rng)];
    let mut s = roots;
    let mut t = [false, true];
    let mut cws = Vec::with_capacity(depth);
    for level in 0..depth {
        let (l, r) = expand(&s);
        let a = path_bit(alpha, level, depth);
        let (keep, lose) = if a { (&r, &l) } else { (&l, &r) };
        let cw = CorrectionWord {
            seed: lose[0].0 ^ lose[1].0,
            t_left: l[0].1 ^ l[1].1 ^ a ^ true,
            t_right: r[0].1 ^ r[1].1 ^ a,
        };
        let t_keep_cw = if a { cw.t_right } else { cw.t_left };
        for p in 0..2 {
            let (ks, kt) = keep[p];
            s[p] = if t[p] { ks ^ cw.seed } else { ks };
            t[p] = kt ^ (t[p] & t_keep_cw);
        }
        cws.push(cw);
    }
    let out_cw = beta ^ convert(s[0]) ^ convert(s[1]);
    let key = |party: u8| DpfKey { party, m, root: roots[party as usize], cws: cws.clone(), out_cw };
    Ok((key(0), key(1)))
}

impl DpfKey {
    /// `kappa + ceil(log2 m) * (kappa + 2) + 1` bits.
    pub fn size_bits(&self) -> usize {
        KAPPA + self.cws.len() * (KAPPA + 2) + 1
    }

    /// Serialized size in bytes, including the 8-byte domain size.
    pub fn serialized_len(&self) -> usize {
        8 + self.size_bits().div_ceil(8)
    }

    fn step(&self, s: u128, t: bool, level: usize, children: &[(u128, bool); 2]) -> [(u128, bool); 2] {
        let cw = self.cws[level];
        let _ = s;
        if t {
            [(children[0].0 ^ cw.seed, children[0].1 ^ cw.t_left), (children[1].0 ^ cw.seed, children[1].1 ^ cw.t_right)]
        } else {
            *children
        }
    }

    pub fn eval(&self, x: u64) -> Result<bool> {
        if x >= self.m {
            return Err(Error::IndexOutOfRange { index: x, size: self.m });
        }
        let depth = self.cws.len();
        let (mut s, mut t) = (self.root, self.party == 1);
        for level in 0..depth {
            let (l, r) = expand(&[s]);
            let ch = self.step(s, t, level, &[l[0], r[0]]);
            (s, t) = ch[path_bit(x, level, depth) as usize];
        }
        Ok(convert(s) ^ (t & self.out_cw))
    }

    /// This party's share of the whole vector, expanding only the prefixes
    /// that cover `[0, m)`.
    pub fn eval_full(&self) -> Bits {
        let depth = self.cws.len();
        let mut nodes = vec![(self.root, self.party == 1)];
        for level in 0..depth {
            // Nodes needed at the next level: ceil(m / 2^(depth - level - 1)).
            let want = self.m.div_ceil(1u64 << (depth - level - 1)) as usize;
            let seeds: Vec<u128> = nodes.iter().map(|n| n.0).collect();
            let (l, r) = expand(&seeds);
            let mut next = Vec::with_capacity(want);
            for (i, &(s, t)) in nodes.iter().enumerate() {
                let ch = self.step(s, t, level, &[l[i], r[i]]);
                next.push(ch[0]);
                if next.len() < want {
                    next.push(ch[1]);
                }
                if next.len() >= want {
                    break;
                }
            }
            nodes = next;
        }
        let mut out = Bits::zeros(self.m as usize);
        for (i, &(s, t)) in nodes.iter().enumerate() {
            if convert(s) ^ (t & self.out_cw) {
                out.set(i, true);
            }
        }
        out
    }

    /// Packed little-endian: m (u64), root, then per level seed and the two
    /// control bits, then the output correction, as one bit string.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bits = Bits::from_u128(self.root, KAPPA);
        for cw in &self.cws {
            bits.extend(&Bits::from_u128(cw.seed, KAPPA));
            bits.push(cw.t_left);
            bits.push(cw.t_right);
        }
        bits.push(self.out_cw);
        let mut out = self.m.to_le_bytes().to_vec();
        out.extend(bits.to_bytes());
        out
    }

    pub fn from_bytes(party: u8, bytes: &[u8]) -> Result<DpfKey> {
        let bad = || Error::CorrelationFile("truncated DPF key".into());
        let m = u64::from_le_bytes(bytes.get(..8).ok_or_else(bad)?.try_into().expect("8 bytes"));
        if m == 0 {
            return Err(Error::CorrelationFile("DPF domain is empty".into()));
        }
        let depth = index_bits(m);
        let nbits = KAPPA + depth * (KAPPA + 2) + 1;
        let body = bytes.get(8..8 + nbits.div_ceil(8)).ok_or_else(bad)?;
        if bytes.len() != 8 + nbits.div_ceil(8) {
            return Err(Error::CorrelationFile("DPF key has trailing bytes".into()));
        }
        let bits = Bits::from_bytes(body, nbits);
        let mut pos = KAPPA;
        let root = bits.slice(0, KAPPA).to_u128();
        let mut cws = Vec::with_capacity(depth);
        for _ in 0..depth {
            let seed = bits.slice(pos, KAPPA).to_u128();
            cws.push(CorrectionWord { seed, t_left: bits.get(pos + KAPPA), t_right: bits.get(pos + KAPPA + 1) });
            pos += KAPPA + 2;
        }
        Ok(DpfKey { party, m, root, cws, out_cw: bits.get(pos) })
    }
}
