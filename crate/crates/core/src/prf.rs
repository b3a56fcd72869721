//! LowMC-style keyed permutation used as the PRF `F(k, x)`.
//!
//! Each instance is a substitution-permutation network over `block` bits
//! with `sboxes` 3-bit S-boxes per round applied to the low bits:
//!
//! ```text
//! s = x ^ K_0 k
//! for i in 0..rounds:  s = L_i S(s) ^ C_i ^ K_{i+1} k
//! ```
//!
//! Matrices and constants are expanded from ChaCha20 seeded with SHA-256 of
//! the instance id, so outputs are only meaningful within this crate. Key
//! size and output size both equal the block size.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::RngCore;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::gmw::{Builder, Circuit, Wire};
use crate::sharing::{Prng, WordShare};

/// `(id, block, sboxes, rounds)`
const REGISTRY: &[(&str, usize, usize, usize)] = &[
    ("toy8", 8, 2, 4),
    ("toy16", 16, 5, 4),
    ("toy64", 64, 10, 8),
    ("lowmc128", 128, 10, 20),
];

pub fn instance_ids() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|r| r.0)
}

pub struct PrfInstance {
    id: String,
    block: usize,
    sboxes: usize,
    rounds: usize,
    /// Rows of the linear layer for each round.
    lin: Vec<Vec<u128>>,
    consts: Vec<u128>,
    /// Rows of the key matrices K_0..K_rounds.
    keymat: Vec<Vec<u128>>,
    circuit: OnceLock<Circuit>,
}

impl std::fmt::Debug for PrfInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PrfInstance({}: {}-bit, {} S-boxes, {} rounds)", self.id, self.block, self.sboxes, self.rounds)
    }
}

fn mask(n: usize) -> u128 {
    if n == 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

fn mat_vec(rows: &[u128], v: u128) -> u128 {
    rows.iter().enumerate().fold(0u128, |acc, (i, r)| acc | (((r & v).count_ones() & 1) as u128) << i)
}

fn rank(rows: &[u128]) -> usize {
    let mut rows = rows.to_vec();
    let mut r = 0;
    for bit in 0..128 {
        let Some(p) = (r..rows.len()).find(|&i| rows[i] >> bit & 1 == 1) else {
            continue;
        };
        rows.swap(r, p);
        for i in 0..rows.len() {
            if i != r && rows[i] >> bit & 1 == 1 {
                rows[i] ^= rows[r];
            }
        }
        r += 1;
    }
    r
}

fn random_invertible(n: usize, rng: &mut Prng) -> Vec<u128> {
    loop {
        let rows: Vec<u128> = (0..n).map(|_| random_word(n, rng)).collect();
        if rank(&rows) == n {
            return rows;
        }
    }
}

fn random_word(n: usize, rng: &mut Prng) -> u128 {
    ((rng.next_u64() as u128) << 64 | rng.next_u64() as u128) & mask(n)
}

fn sbox(a: bool, b: bool, c: bool) -> (bool, bool, bool) {
    (a ^ (b & c), a ^ b ^ (a & c), a ^ b ^ c ^ (a & b))
}

impl PrfInstance {
    fn generate(id: &str, block: usize, sboxes: usize, rounds: usize) -> PrfInstance {
        assert!(block <= 128 && 3 * sboxes <= block);
        let mut rng = Prng::from_seed(Sha256::digest(id.as_bytes()).into());
        let lin = (0..rounds).map(|_| random_invertible(block, &mut rng)).collect();
        let consts = (0..rounds).map(|_| random_word(block, &mut rng)).collect();
        let keymat = (0..=rounds).map(|_| random_invertible(block, &mut rng)).collect();
        PrfInstance { id: id.to_string(), block, sboxes, rounds, lin, consts, keymat, circuit: OnceLock::new() }
    }

    /// Shared, lazily generated instance by registry id.
    pub fn by_id(id: &str) -> Result<Arc<PrfInstance>> {
        static CACHE: OnceLock<Mutex<HashMap<String, Arc<PrfInstance>>>> = OnceLock::new();
        let &(_, block, sboxes, rounds) =
            REGISTRY.iter().find(|r| r.0 == id).ok_or_else(|| Error::UnknownInstance(id.to_string()))?;
        let mut cache = CACHE.get_or_init(Default::default).lock().expect("prf cache poisoned");
        Ok(cache
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(PrfInstance::generate(id, block, sboxes, rounds)))
            .clone())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Block size: the key, input and output width.
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn key_bits(&self) -> usize {
        self.block
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn sboxes(&self) -> usize {
        self.sboxes
    }

    pub fn eval_u128(&self, key: u128, x: u128) -> u128 {
        let m = mask(self.block);
        let (key, x) = (key & m, x & m);
        let mut s = x ^ mat_vec(&self.keymat[0], key);
        for i in 0..self.rounds {
            for j in 0..self.sboxes {
                let a = s >> (3 * j) & 1 == 1;
                let b = s >> (3 * j + 1) & 1 == 1;
                let c = s >> (3 * j + 2) & 1 == 1;
                let (a, b, c) = sbox(a, b, c);
                s &= !(0b111u128 << (3 * j));
                s |= (a as u128 | (b as u128) << 1 | (c as u128) << 2) << (3 * j);
            }
            s = mat_vec(&self.lin[i], s) ^ self.consts[i] ^ mat_vec(&self.keymat[i + 1], key);
        }
        s
    }

    /// `F(key, input)`; the input is zero-extended to the block size.
    pub fn eval(&self, key: &Bits, input: &Bits) -> Result<Bits> {
        if key.len() != self.block {
            return Err(Error::WidthMismatch { expected: self.block, got: key.len() });
        }
        if input.len() > self.block {
            return Err(Error::WidthMismatch { expected: self.block, got: input.len() });
        }
        Ok(Bits::from_u128(self.eval_u128(key.to_u128(), input.to_u128()), self.block))
    }

    /// Group A is the key, group B the input block.
    pub fn circuit(&self) -> &Circuit {
        self.circuit.get_or_init(|| self.build_circuit())
    }

    /// Rounds of one shared evaluation (the circuit's AND-depth).
    pub fn r_f(&self) -> usize {
        self.circuit().and_depth()
    }

    pub fn and_count(&self) -> usize {
        self.circuit().and_count()
    }

    fn build_circuit(&self) -> Circuit {
        let n = self.block;
        let mut b = Builder::new(n, n);
        let key = b.a_word();
        let x = b.b_word();

        fn mat(b: &mut Builder, rows: &[u128], v: &[Wire]) -> Vec<Option<Wire>> {
            rows.iter()
                .map(|r| {
                    let mut acc: Option<Wire> = None;
                    for (j, &w) in v.iter().enumerate() {
                        if r >> j & 1 == 1 {
                            acc = Some(match acc {
                                None => w,
                                Some(a) => b.xor(a, w),
                            });
                        }
                    }
                    acc
                })
                .collect()
        }
        // XOR of optional wires; None is the constant 0.
        fn add(b: &mut Builder, x: Option<Wire>, y: Option<Wire>) -> Option<Wire> {
            match (x, y) {
                (Some(x), Some(y)) => Some(b.xor(x, y)),
                (x, None) => x,
                (None, y) => y,
            }
        }
        // Materializes the constant 0 as x ^ x when needed.
        fn wire(b: &mut Builder, w: Option<Wire>, zero_src: Wire) -> Wire {
            w.unwrap_or_else(|| b.xor(zero_src, zero_src))
        }

        let k0 = mat(&mut b, &self.keymat[0], &key);
        let mut s: Vec<Option<Wire>> = x.iter().zip(k0).map(|(&xi, ki)| add(&mut b, Some(xi), ki)).collect();
        for i in 0..self.rounds {
            for j in 0..self.sboxes {
                let a = wire(&mut b, s[3 * j], x[0]);
                let bb = wire(&mut b, s[3 * j + 1], x[0]);
                let c = wire(&mut b, s[3 * j + 2], x[0]);
                let bc = b.and(bb, c);
                let ac = b.and(a, c);
                let ab = b.and(a, bb);
                let na = b.xor(a, bc);
                let t = b.xor(a, bb);
                let nb = b.xor(t, ac);
                let u = b.xor(t, c);
                let nc = b.xor(u, ab);
                s[3 * j] = Some(na);
                s[3 * j + 1] = Some(nb);
                s[3 * j + 2] = Some(nc);
            }
            let full: Vec<Wire> = s.iter().map(|&w| wire(&mut b, w, x[0])).collect();
            let l = mat(&mut b, &self.lin[i], &full);
            let k = mat(&mut b, &self.keymat[i + 1], &key);
            s = (0..n)
                .map(|r| {
                    let v = add(&mut b, l[r], k[r]);
                    if self.consts[i] >> r & 1 == 1 {
                        let w = wire(&mut b, v, x[0]);
                        Some(b.inv(w))
                    } else {
                        v
                    }
                })
                .collect();
        }
        let outs: Vec<Wire> = s.into_iter().map(|w| {
            let w = wire(&mut b, w, x[0]);
            b.copy(w)
        }).collect();
        b.finish(&outs)
    }
}

/// Bits needed for indices in `[0, m)`.
pub fn index_bits(m: u64) -> usize {
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros() as usize
    }
}

/// Local `(i << ceil(log2 B)) + j` into a `width`-bit share. `i` must lie in
/// `[0, m)`; `apply_const` is true for exactly one party.
pub fn index_concat(
    i: &WordShare,
    j: u64,
    blocks: u64,
    m: u64,
    width: usize,
    apply_const: bool,
) -> Result<WordShare> {
    let lb = index_bits(blocks);
    let needed = index_bits(m) + lb;
    if needed > width {
        return Err(Error::IndexWidthOverflow { needed, width });
    }
    if j >= blocks.max(1) {
        return Err(Error::IndexOutOfRange { index: j, size: blocks });
    }
    let keep = i.width().min(width - lb);
    let mut out = Bits::zeros(width);
    out.write(lb, &i.bits().slice(0, keep));
    if apply_const {
        out.xor_at(0, &Bits::from_u64(j, lb));
    }
    Ok(WordShare::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::share_boolean_with;

    #[test]
    fn registry_and_counts() {
        for (id, ands) in [("toy8", 24), ("toy16", 60), ("toy64", 240), ("lowmc128", 600)] {
            let p = PrfInstance::by_id(id).unwrap();
            assert_eq!(p.and_count(), ands, "{id}");
            assert_eq!(p.r_f(), p.rounds(), "{id}");
        }
        assert!(PrfInstance::by_id("aes").is_err());
    }

    #[test]
    fn circuit_matches_plain_exhaustive_toy8() {
        let p = PrfInstance::by_id("toy8").unwrap();
        for key in [0u128, 0x5a, 0xff, 0x13] {
            for x in 0..256u128 {
                let want = p.eval_u128(key, x);
                let got = p.circuit().eval_plain(&Bits::from_u128(key, 8), &Bits::from_u128(x, 8)).unwrap();
                assert_eq!(got.to_u128(), want);
            }
        }
    }

    #[test]
    fn circuit_matches_plain_random() {
        let mut rng = Prng::seed_from_u64(9);
        for id in ["toy16", "toy64", "lowmc128"] {
            let p = PrfInstance::by_id(id).unwrap();
            for _ in 0..100 {
                let k = Bits::random(p.block(), &mut rng);
                let x = Bits::random(p.block(), &mut rng);
                assert_eq!(p.circuit().eval_plain(&k, &x).unwrap(), p.eval(&k, &x).unwrap(), "{id}");
            }
        }
    }

    #[test]
    fn deterministic_and_width_checked() {
        let p = PrfInstance::by_id("toy16").unwrap();
        let k = Bits::from_u64(0x1234, 16);
        let x = Bits::from_u64(7, 10);
        assert_eq!(p.eval(&k, &x).unwrap(), p.eval(&k, &x).unwrap());
        assert!(p.eval(&Bits::zeros(8), &x).is_err());
        assert!(p.eval(&k, &Bits::zeros(17)).is_err());
    }

    #[test]
    fn birthday_rate_sanity() {
        let p = PrfInstance::by_id("toy64").unwrap();
        let mut seen = std::collections::HashSet::new();
        for x in 0..10_000u128 {
            seen.insert(p.eval_u128(0xdead_beef, x));
        }
        // A 64-bit permutation never collides; anything else signals a bug.
        assert_eq!(seen.len(), 10_000);
        let p = PrfInstance::by_id("toy16").unwrap();
        let outs: std::collections::HashSet<u128> = (0..10_000u128).map(|x| p.eval_u128(7, x)).collect();
        assert_eq!(outs.len(), 10_000, "toy16 is a permutation on 16-bit inputs");
    }

    #[test]
    fn index_concat_examples() {
        let (i0, i1) = share_boolean_with(&Bits::from_u64(3, 8), &Bits::from_u64(0xa5, 8)).unwrap();
        let a = index_concat(&i0, 2, 4, 4, 8, true).unwrap();
        let b = index_concat(&i1, 2, 4, 4, 8, false).unwrap();
        assert_eq!(a.reconstruct(&b).unwrap().to_u64(), 14);
        let a = index_concat(&i0, 0, 1, 4, 8, true).unwrap();
        let b = index_concat(&i1, 0, 1, 4, 8, false).unwrap();
        assert_eq!(a.reconstruct(&b).unwrap().to_u64(), 3);
        assert_eq!(
            index_concat(&i0, 0, 4, 1 << 7, 8, true),
            Err(Error::IndexWidthOverflow { needed: 9, width: 8 })
        );
    }

    #[test]
    fn index_concat_injective_small() {
        let mut seen = std::collections::HashSet::new();
        let (m, blocks) = (16u64, 8u64);
        for i in 0..m {
            for j in 0..blocks {
                let s = WordShare::new(Bits::from_u64(i, 8));
                let v = index_concat(&s, j, blocks, m, 8, true).unwrap().bits().to_u64();
                assert!(seen.insert(v));
            }
        }
    }
}
