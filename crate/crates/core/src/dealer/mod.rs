//! Preprocessing: a seeded trusted dealer that issues every correlation the
//! online protocols consume, the on-disk correlation file, and two
//! interactive protocols that produce modular triples without a dealer.
//!
//! Pools are keyed by their public parameters and consumed front to back.
//! [`Budget`] counts what one run needs; [`deal`] produces exactly that.

mod file;
mod interactive;

use std::collections::{BTreeMap, VecDeque};

use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, RngCore, SeedableRng};

use crate::bits::Bits;
use crate::channel::Party;
use crate::dpf::{dpf_gen, DpfKey};
use crate::error::{Error, Result};
use crate::gmw::TripleStream;
use crate::prf::index_bits;
use crate::sharing::{derive_rng, Prng, WordShare};

pub use file::{CorrelationFileHeader, FILE_MAGIC, FILE_VERSION, HEADER_LEN};
pub use interactive::{
    ahe_mask_fits, bmt_ot_count, bmt_ot_kind, gen_bmt_ahe, gen_bmt_ot, ot_receive, ot_respond, provision_bmts_ahe,
    provision_bmts_ot, AheRole,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WbvMode {
    /// Each party stores its share of the length-m vector.
    Direct,
    /// Each party stores a DPF key that expands to its share.
    Dpf,
}

/// Random 1-of-2 OT over `Z_n`, P0 always the sender: P0 holds `(p0, p1)`,
/// P1 holds `(c, p_c)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BitOt {
    Sender { p0: BigUint, p1: BigUint },
    Receiver { c: bool, pc: BigUint },
}

/// Random 1-of-k OT on `width`-bit strings. The sender's k pads are
/// expanded from a seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KOt {
    Sender { seed: [u8; 32] },
    Receiver { c: u64, pad: Bits },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KOtKind {
    pub k: u64,
    pub width: usize,
    pub sender: Party,
}

/// The k sender pads behind a [`KOt::Sender`] seed.
pub fn kot_pads(seed: &[u8; 32], k: u64, width: usize) -> Vec<Bits> {
    let mut rng = Prng::from_seed(*seed);
    (0..k).map(|_| Bits::random(width, &mut rng)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WbvVector {
    Direct(Bits),
    Dpf(DpfKey),
}

/// One party's share of a weight-1 bit vector whose 1 sits at `rdx`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WbvShare {
    pub m: u64,
    /// Share of rdx over `ceil(log2 m)` bits.
    pub rdx: WordShare,
    pub vector: WbvVector,
}

impl WbvShare {
    pub fn mode(&self) -> WbvMode {
        match self.vector {
            WbvVector::Direct(_) => WbvMode::Direct,
            WbvVector::Dpf(_) => WbvMode::Dpf,
        }
    }

    /// This party's share of the length-m vector.
    pub fn expand(&self) -> Bits {
        match &self.vector {
            WbvVector::Direct(b) => b.clone(),
            WbvVector::Dpf(k) => k.eval_full(),
        }
    }
}

/// A multiplication triple mod `modulus` in the special form: one party
/// knows `a`, the other `b`, and `c = a * b` is additively shared.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModTriple {
    pub modulus: BigUint,
    /// `a` for the a-holder, `b` for the other party.
    pub own: BigUint,
    pub c: BigUint,
}

/// Exact correlation counts for a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Budget {
    pub triples: u64,
    pub bit_ots: BTreeMap<BigUint, u64>,
    pub k_ots: BTreeMap<KOtKind, u64>,
    pub wbvs: BTreeMap<(u64, WbvMode), u64>,
    /// Keyed by modulus and the party holding `a`.
    pub mod_bmts: BTreeMap<(BigUint, Party), u64>,
}

impl Budget {
    pub fn triples(mut self, n: u64) -> Self {
        self.triples += n;
        self
    }

    pub fn bit_ots(mut self, modulus: &BigUint, n: u64) -> Self {
        if n > 0 {
            *self.bit_ots.entry(modulus.clone()).or_default() += n;
        }
        self
    }

    pub fn k_ots(mut self, kind: KOtKind, n: u64) -> Self {
        if n > 0 {
            *self.k_ots.entry(kind).or_default() += n;
        }
        self
    }

    pub fn wbvs(mut self, m: u64, mode: WbvMode, n: u64) -> Self {
        if n > 0 {
            *self.wbvs.entry((m, mode)).or_default() += n;
        }
        self
    }

    pub fn mod_bmts(mut self, modulus: &BigUint, a_holder: Party, n: u64) -> Self {
        if n > 0 {
            *self.mod_bmts.entry((modulus.clone(), a_holder)).or_default() += n;
        }
        self
    }

    pub fn add(&mut self, other: &Budget) {
        self.triples += other.triples;
        for (k, v) in &other.bit_ots {
            *self.bit_ots.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.k_ots {
            *self.k_ots.entry(*k).or_default() += v;
        }
        for (k, v) in &other.wbvs {
            *self.wbvs.entry(*k).or_default() += v;
        }
        for (k, v) in &other.mod_bmts {
            *self.mod_bmts.entry(k.clone()).or_default() += v;
        }
    }

    pub fn times(&self, n: u64) -> Budget {
        let mut out = Budget::default();
        for _ in 0..n {
            out.add(self);
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.triples == 0
            && self.bit_ots.values().all(|&v| v == 0)
            && self.k_ots.values().all(|&v| v == 0)
            && self.wbvs.values().all(|&v| v == 0)
            && self.mod_bmts.values().all(|&v| v == 0)
    }
}

pub fn gen_boolean_triples<R: RngCore + ?Sized>(count: usize, rng: &mut R) -> (TripleStream, TripleStream) {
    let a0 = Bits::random(count, rng);
    let b0 = Bits::random(count, rng);
    let c0 = Bits::random(count, rng);
    let a1 = Bits::random(count, rng);
    let b1 = Bits::random(count, rng);
    let mut c1 = a0.xor(&a1).and(&b0.xor(&b1));
    c1.xor_assign(&c0);
    (TripleStream::new(a0, b0, c0), TripleStream::new(a1, b1, c1))
}

/// Random bit OTs mod `modulus`: (P0's sender halves, P1's receiver halves).
pub fn gen_bit_ots<R: RngCore + ?Sized>(modulus: &BigUint, count: usize, rng: &mut R) -> (Vec<BitOt>, Vec<BitOt>) {
    (0..count)
        .map(|_| {
            let p0 = rng.gen_biguint_below(modulus);
            let p1 = rng.gen_biguint_below(modulus);
            let c: bool = rng.gen();
            let pc = if c { p1.clone() } else { p0.clone() };
            (BitOt::Sender { p0, p1 }, BitOt::Receiver { c, pc })
        })
        .unzip()
}

/// Random 1-of-k OTs on `width`-bit strings: (sender halves, receiver halves).
pub fn gen_precomputed_ot<R: RngCore + ?Sized>(
    k: u64,
    width: usize,
    count: usize,
    rng: &mut R,
) -> Result<(Vec<KOt>, Vec<KOt>)> {
    if k < 2 {
        return Err(Error::ConfigInvalid(format!("1-of-{k} OT needs k >= 2")));
    }
    Ok((0..count)
        .map(|_| {
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            let c = rng.gen_range(0..k);
            let pad = kot_pads(&seed, k, width).swap_remove(c as usize);
            (KOt::Sender { seed }, KOt::Receiver { c, pad })
        })
        .unzip())
}

/// Shares of a weight-1 vector of length `m` with its 1 at a uniform `rdx`.
pub fn gen_wbv<R: RngCore + ?Sized>(m: u64, mode: WbvMode, rng: &mut R) -> Result<(WbvShare, WbvShare)> {
    if m == 0 {
        return Err(Error::ConfigInvalid("weight-1 vector of length 0".into()));
    }
    let sigma = index_bits(m);
    let rdx = rng.gen_range(0..m);
    let r0 = Bits::random(sigma, rng);
    let r1 = r0.xor(&Bits::from_u64(rdx, sigma));
    let (v0, v1) = match mode {
        WbvMode::Direct => {
            let s0 = Bits::random(m as usize, rng);
            let mut s1 = s0.clone();
            s1.flip(rdx as usize);
            (WbvVector::Direct(s0), WbvVector::Direct(s1))
        }
        WbvMode::Dpf => {
            let (k0, k1) = dpf_gen(rdx, true, m, rng)?;
            (WbvVector::Dpf(k0), WbvVector::Dpf(k1))
        }
    };
    Ok((
        WbvShare { m, rdx: WordShare::new(r0), vector: v0 },
        WbvShare { m, rdx: WordShare::new(r1), vector: v1 },
    ))
}

/// Special-form triple: (a-holder's half, b-holder's half).
pub fn gen_special_bmt<R: RngCore + ?Sized>(modulus: &BigUint, rng: &mut R) -> (ModTriple, ModTriple) {
    let a = rng.gen_biguint_below(modulus);
    let b = rng.gen_biguint_below(modulus);
    let c0 = rng.gen_biguint_below(modulus);
    let c1 = (&a * &b % modulus + modulus - &c0) % modulus;
    (
        ModTriple { modulus: modulus.clone(), own: a, c: c0 },
        ModTriple { modulus: modulus.clone(), own: b, c: c1 },
    )
}

/// One party's supply of correlations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrelationStore {
    party: Party,
    fingerprint: [u8; 8],
    triples: TripleStream,
    bit_ots: BTreeMap<BigUint, VecDeque<BitOt>>,
    k_ots: BTreeMap<KOtKind, VecDeque<KOt>>,
    wbvs: BTreeMap<(u64, WbvMode), VecDeque<WbvShare>>,
    mod_bmts: BTreeMap<(BigUint, Party), VecDeque<ModTriple>>,
}

/// First 8 bytes of SHA-256 over the seed.
pub fn seed_fingerprint(seed: u64) -> [u8; 8] {
    use sha2::{Digest, Sha256};
    Sha256::digest(seed.to_le_bytes()).as_slice()[..8].try_into().expect("8 bytes")
}

impl CorrelationStore {
    pub fn empty(party: Party) -> Self {
        CorrelationStore {
            party,
            fingerprint: [0; 8],
            triples: TripleStream::default(),
            bit_ots: BTreeMap::new(),
            k_ots: BTreeMap::new(),
            wbvs: BTreeMap::new(),
            mod_bmts: BTreeMap::new(),
        }
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn fingerprint(&self) -> [u8; 8] {
        self.fingerprint
    }

    pub fn triples(&mut self) -> &mut TripleStream {
        &mut self.triples
    }

    pub fn take_bit_ots(&mut self, modulus: &BigUint, n: usize) -> Result<Vec<BitOt>> {
        let pool = self.bit_ots.get_mut(modulus);
        match pool {
            Some(p) if p.len() >= n => Ok(p.drain(..n).collect()),
            _ => Err(Error::OtExhausted(format!("{n} bit OTs mod a {}-bit modulus", modulus.bits()))),
        }
    }

    pub fn take_k_ot(&mut self, kind: KOtKind) -> Result<KOt> {
        self.k_ots
            .get_mut(&kind)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| Error::OtExhausted(format!("1-of-{} OT on {} bits", kind.k, kind.width)))
    }

    pub fn take_wbv(&mut self, m: u64, mode: WbvMode) -> Result<WbvShare> {
        self.wbvs
            .get_mut(&(m, mode))
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| Error::CorrelationExhausted(format!("weight-1 vector of length {m}")))
    }

    pub fn take_mod_bmt(&mut self, modulus: &BigUint, a_holder: Party) -> Result<ModTriple> {
        self.mod_bmts
            .get_mut(&(modulus.clone(), a_holder))
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| Error::CorrelationExhausted(format!("modular triple mod a {}-bit modulus", modulus.bits())))
    }

    /// Adds a triple produced outside the dealer (see [`gen_bmt_ahe`]).
    pub fn push_mod_bmt(&mut self, a_holder: Party, t: ModTriple) {
        self.mod_bmts.entry((t.modulus.clone(), a_holder)).or_default().push_back(t);
    }

    /// What is left in every pool.
    pub fn remaining(&self) -> Budget {
        Budget {
            triples: self.triples.remaining() as u64,
            bit_ots: self.bit_ots.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k.clone(), v.len() as u64)).collect(),
            k_ots: self.k_ots.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (*k, v.len() as u64)).collect(),
            wbvs: self.wbvs.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (*k, v.len() as u64)).collect(),
            mod_bmts: self.mod_bmts.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k.clone(), v.len() as u64)).collect(),
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining().is_empty()
    }
}

/// Both parties' stores for `budget`, deterministic in `seed`. Each pool
/// draws from its own child generator.
pub fn deal(budget: &Budget, seed: u64) -> Result<[CorrelationStore; 2]> {
    let mut s = [CorrelationStore::empty(Party::P0), CorrelationStore::empty(Party::P1)];
    let fp = seed_fingerprint(seed);
    s[0].fingerprint = fp;
    s[1].fingerprint = fp;

    let (t0, t1) = gen_boolean_triples(budget.triples as usize, &mut derive_rng(seed, "triples"));
    s[0].triples = t0;
    s[1].triples = t1;

    for (modulus, &n) in &budget.bit_ots {
        let mut rng = derive_rng(seed, &format!("bit-ot/{modulus}"));
        let (a, b) = gen_bit_ots(modulus, n as usize, &mut rng);
        s[0].bit_ots.insert(modulus.clone(), a.into());
        s[1].bit_ots.insert(modulus.clone(), b.into());
    }
    for (kind, &n) in &budget.k_ots {
        let mut rng = derive_rng(seed, &format!("k-ot/{}/{}/{}", kind.k, kind.width, kind.sender));
        let (snd, rcv) = gen_precomputed_ot(kind.k, kind.width, n as usize, &mut rng)?;
        s[kind.sender.index()].k_ots.insert(*kind, snd.into());
        s[kind.sender.other().index()].k_ots.insert(*kind, rcv.into());
    }
    for (&(m, mode), &n) in &budget.wbvs {
        let mut rng = derive_rng(seed, &format!("wbv/{m}/{mode:?}"));
        let mut p0 = VecDeque::with_capacity(n as usize);
        let mut p1 = VecDeque::with_capacity(n as usize);
        for _ in 0..n {
            let (a, b) = gen_wbv(m, mode, &mut rng)?;
            p0.push_back(a);
            p1.push_back(b);
        }
        s[0].wbvs.insert((m, mode), p0);
        s[1].wbvs.insert((m, mode), p1);
    }
    for ((modulus, a_holder), &n) in &budget.mod_bmts {
        let mut rng = derive_rng(seed, &format!("bmt/{modulus}/{a_holder}"));
        for _ in 0..n {
            let (a, b) = gen_special_bmt(modulus, &mut rng);
            s[a_holder.index()].push_mod_bmt(*a_holder, a);
            s[a_holder.other().index()].push_mod_bmt(*a_holder, b);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn triples_satisfy_and_relation() {
        let mut rng = Prng::seed_from_u64(1);
        let (t0, t1) = gen_boolean_triples(100_000, &mut rng);
        let (a0, b0, c0) = t0.parts();
        let (a1, b1, c1) = t1.parts();
        assert_eq!(a0.xor(a1).and(&b0.xor(b1)), c0.xor(c1));
        let (e0, e1) = gen_boolean_triples(0, &mut rng);
        assert!(e0.is_empty() && e1.is_empty());
        let x = gen_boolean_triples(64, &mut Prng::seed_from_u64(9));
        let y = gen_boolean_triples(64, &mut Prng::seed_from_u64(9));
        assert_eq!(x, y);
    }

    #[test]
    fn wbv_single_position() {
        let mut rng = Prng::seed_from_u64(2);
        let (a, b) = gen_wbv(1, WbvMode::Direct, &mut rng).unwrap();
        assert_eq!(a.expand().xor(&b.expand()), Bits::ones(1));
        assert_eq!(a.rdx.width(), 0);
    }

    #[test]
    fn wbv_weight_and_position_both_modes() {
        let mut rng = Prng::seed_from_u64(3);
        for mode in [WbvMode::Direct, WbvMode::Dpf] {
            for _ in 0..1000 {
                let (a, b) = gen_wbv(8, mode, &mut rng).unwrap();
                let s = a.expand().xor(&b.expand());
                assert_eq!(s.count_ones(), 1);
                let rdx = a.rdx.reconstruct(&b.rdx).unwrap().to_u64();
                assert!(s.get(rdx as usize));
            }
        }
    }

    #[test]
    fn wbv_rdx_is_uniform_in_both_modes() {
        let mut rng = Prng::seed_from_u64(4);
        let m = 10u64;
        for mode in [WbvMode::Direct, WbvMode::Dpf] {
            let mut hist = vec![0u32; m as usize];
            let trials = 5000;
            for _ in 0..trials {
                let (a, b) = gen_wbv(m, mode, &mut rng).unwrap();
                hist[a.expand().xor(&b.expand()).ones_positions().next().unwrap()] += 1;
            }
            let expect = trials as f64 / m as f64;
            let chi2: f64 = hist.iter().map(|&h| (h as f64 - expect).powi(2) / expect).sum();
            // 9 degrees of freedom; 27.9 is the 0.999 quantile.
            assert!(chi2 < 27.9, "{mode:?} chi2 {chi2}");
        }
    }

    #[test]
    fn bit_ots_are_consistent() {
        let n = BigUint::from(23u32);
        let (s, r) = gen_bit_ots(&n, 200, &mut Prng::seed_from_u64(5));
        for (s, r) in s.iter().zip(&r) {
            let (BitOt::Sender { p0, p1 }, BitOt::Receiver { c, pc }) = (s, r) else { panic!("roles") };
            assert_eq!(pc, if *c { p1 } else { p0 });
            assert!(p0 < &n && p1 < &n);
        }
    }

    #[test]
    fn k_ots_are_consistent() {
        let (s, r) = gen_precomputed_ot(8, 40, 50, &mut Prng::seed_from_u64(6)).unwrap();
        for (s, r) in s.iter().zip(&r) {
            let (KOt::Sender { seed }, KOt::Receiver { c, pad }) = (s, r) else { panic!("roles") };
            assert_eq!(&kot_pads(seed, 8, 40)[*c as usize], pad);
        }
        assert!(gen_precomputed_ot(1, 8, 1, &mut Prng::seed_from_u64(6)).is_err());
    }

    #[test]
    fn special_bmts_multiply() {
        let n = BigUint::from(1225u32);
        let mut rng = Prng::seed_from_u64(7);
        for _ in 0..500 {
            let (a, b) = gen_special_bmt(&n, &mut rng);
            assert_eq!((&a.c + &b.c) % &n, &a.own * &b.own % &n);
        }
    }

    #[test]
    fn deal_matches_budget_and_is_deterministic() {
        let n = BigUint::from(1000u32);
        let kind = KOtKind { k: 5, width: 12, sender: Party::P1 };
        let budget = Budget::default()
            .triples(77)
            .bit_ots(&n, 9)
            .k_ots(kind, 3)
            .wbvs(23, WbvMode::Dpf, 2)
            .wbvs(23, WbvMode::Direct, 1)
            .mod_bmts(&n, Party::P0, 4);
        let [mut s0, mut s1] = deal(&budget, 42).unwrap();
        assert_eq!(s0.remaining(), budget);
        assert_eq!(s1.remaining(), budget);
        assert_eq!(deal(&budget, 42).unwrap()[0], s0);
        assert_ne!(deal(&budget, 43).unwrap()[0], s0);

        s0.triples().take(77).unwrap();
        s1.triples().take(77).unwrap();
        assert_eq!(s0.triples().take(1), Err(Error::TriplesExhausted));
        assert!(matches!(s0.take_k_ot(kind).unwrap(), KOt::Receiver { .. }));
        assert!(matches!(s1.take_k_ot(kind).unwrap(), KOt::Sender { .. }));
        assert!(s0.take_bit_ots(&n, 10).is_err());
        assert_eq!(s0.take_bit_ots(&n, 9).unwrap().len(), 9);
        let a = s0.take_mod_bmt(&n, Party::P0).unwrap();
        let b = s1.take_mod_bmt(&n, Party::P0).unwrap();
        assert_eq!((&a.c + &b.c) % &n, &a.own * &b.own % &n);
        let w0 = s0.take_wbv(23, WbvMode::Dpf).unwrap();
        let w1 = s1.take_wbv(23, WbvMode::Dpf).unwrap();
        assert_eq!(w0.expand().xor(&w1.expand()).count_ones(), 1);
        assert!(matches!(s0.take_wbv(64, WbvMode::Dpf), Err(Error::CorrelationExhausted(_))));
    }

    #[test]
    fn budget_arithmetic() {
        let n = BigUint::from(7u32);
        let b = Budget::default().triples(3).bit_ots(&n, 2);
        let t = b.times(4);
        assert_eq!(t.triples, 12);
        assert_eq!(t.bit_ots[&n], 8);
        assert!(Budget::default().is_empty());
        assert!(Budget::default().bit_ots(&n, 0).is_empty());
    }
}
