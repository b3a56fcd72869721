//! Modular triples without a dealer, and chosen-message OT on top of the
//! precomputed pools.

use num_bigint::{BigUint, RandBigInt};
use rand::RngCore;

use super::{kot_pads, CorrelationStore, KOt, KOtKind, ModTriple};
use crate::bits::Bits;
use crate::channel::{Endpoint, Party};
use crate::error::{Error, Result};
use crate::paillier::{PaillierKeypair, PublicKey};
use crate::wire::{Reader, Writer};

/// Chosen-message 1-of-k OT, receiver side. Consumes one precomputed OT per
/// choice; two flushes.
pub fn ot_receive(ep: &mut Endpoint, store: &mut CorrelationStore, kind: KOtKind, choices: &[u64]) -> Result<Vec<Bits>> {
    let mut held = Vec::with_capacity(choices.len());
    let mut w = Writer::new();
    for &x in choices {
        if x >= kind.k {
            return Err(Error::IndexOutOfRange { index: x, size: kind.k });
        }
        let KOt::Receiver { c, pad } = store.take_k_ot(kind)? else {
            return Err(Error::ConfigInvalid("receiver holds a sender OT".into()));
        };
        w.index((c + kind.k - x) % kind.k, kind.k);
        held.push(pad);
    }
    ep.send(w.finish())?;
    ep.flush_round()?;
    ep.flush_round()?;
    let msg = ep.recv()?;
    let mut r = Reader::new(&msg);
    let mut out = Vec::with_capacity(choices.len());
    for (&x, pad) in choices.iter().zip(held) {
        let mut y = Bits::zeros(0);
        for j in 0..kind.k {
            let yj = r.bits(kind.width)?;
            if j == x {
                y = yj;
            }
        }
        out.push(y.xor(&pad));
    }
    r.finish()?;
    Ok(out)
}

/// Sender side of [`ot_receive`]: `messages[i]` holds the k strings of
/// instance i.
pub fn ot_respond(ep: &mut Endpoint, store: &mut CorrelationStore, kind: KOtKind, messages: &[Vec<Bits>]) -> Result<()> {
    let mut seeds = Vec::with_capacity(messages.len());
    for msgs in messages {
        if msgs.len() as u64 != kind.k {
            return Err(Error::WidthMismatch { expected: kind.k as usize, got: msgs.len() });
        }
        let KOt::Sender { seed } = store.take_k_ot(kind)? else {
            return Err(Error::ConfigInvalid("sender holds a receiver OT".into()));
        };
        seeds.push(seed);
    }
    ep.flush_round()?;
    let msg = ep.recv()?;
    let mut r = Reader::new(&msg);
    let mut w = Writer::new();
    for (msgs, seed) in messages.iter().zip(&seeds) {
        let s = r.index(kind.k)?;
        let pads = kot_pads(seed, kind.k, kind.width);
        for (j, m) in msgs.iter().enumerate() {
            if m.len() != kind.width {
                return Err(Error::WidthMismatch { expected: kind.width, got: m.len() });
            }
            w.bits(&m.xor(&pads[(j as u64 + s) as usize % kind.k as usize]));
        }
    }
    r.finish()?;
    ep.send(w.finish())?;
    ep.flush_round()
}

/// The OT kind [`gen_bmt_ot`] draws from for `modulus`.
pub fn bmt_ot_kind(modulus: &BigUint) -> KOtKind {
    KOtKind { k: 2, width: modulus.bits() as usize, sender: Party::P1 }
}

/// OTs consumed per triple by [`gen_bmt_ot`].
pub fn bmt_ot_count(modulus: &BigUint) -> u64 {
    (modulus - 1u32).bits().max(1)
}

/// Special-form triples from 1-of-2 OT. P0 passes its `a` values, P1 its
/// `b` values; P1 is the OT sender with messages `(r_i, r_i + 2^i b)`.
/// Two flushes for the whole batch.
pub fn gen_bmt_ot<R: RngCore + ?Sized>(
    ep: &mut Endpoint,
    store: &mut CorrelationStore,
    modulus: &BigUint,
    own: &[BigUint],
    rng: &mut R,
) -> Result<Vec<ModTriple>> {
    let kind = bmt_ot_kind(modulus);
    let ell = bmt_ot_count(modulus);
    if own.iter().any(|x| x >= modulus) {
        return Err(Error::PlaintextOutOfRange);
    }
    match ep.party() {
        Party::P0 => {
            let choices: Vec<u64> = own.iter().flat_map(|a| (0..ell).map(move |i| a.bit(i) as u64)).collect();
            let got = ot_receive(ep, store, kind, &choices)?;
            Ok(own
                .iter()
                .zip(got.chunks(ell as usize))
                .map(|(a, ms)| {
                    let c = ms.iter().fold(BigUint::ZERO, |acc, m| (acc + m.to_biguint()) % modulus);
                    ModTriple { modulus: modulus.clone(), own: a.clone(), c }
                })
                .collect())
        }
        Party::P1 => {
            let mut messages = Vec::with_capacity(own.len() * ell as usize);
            let mut out = Vec::with_capacity(own.len());
            for b in own {
                let mut sum = BigUint::ZERO;
                for i in 0..ell {
                    let r = rng.gen_biguint_below(modulus);
                    let m1 = (&r + (b << i)) % modulus;
                    sum = (sum + &r) % modulus;
                    messages.push(vec![Bits::from_biguint(&r, kind.width), Bits::from_biguint(&m1, kind.width)]);
                }
                let c = (modulus - sum) % modulus;
                out.push(ModTriple { modulus: modulus.clone(), own: b.clone(), c });
            }
            ot_respond(ep, store, kind, &messages)?;
            Ok(out)
        }
    }
}

pub enum AheRole<'a> {
    /// P0: holds the decryption key and `a`.
    KeyHolder(&'a PaillierKeypair),
    /// P1: holds `b` and the public key.
    Peer(&'a PublicKey),
}

/// Whether `a * b + r + rho * n` stays below `N` for all inputs.
pub fn ahe_mask_fits(modulus: &BigUint, lambda: u32, pk: &PublicKey) -> bool {
    let m1 = modulus - 1u32;
    let bound = &m1 * &m1 + &m1 + ((BigUint::from(1u32) << lambda) - 1u32) * modulus;
    &bound < pk.n()
}

/// Special-form triples from additively homomorphic encryption. P0 sends
/// `Enc(a)`, P1 answers `Enc(a)^b * Enc(r + rho n)`; P0 keeps the
/// decryption mod `n` and P1 keeps `-r`. Two flushes for the whole batch.
pub fn gen_bmt_ahe<R: RngCore + ?Sized>(
    ep: &mut Endpoint,
    role: AheRole<'_>,
    modulus: &BigUint,
    lambda: u32,
    own: &[BigUint],
    rng: &mut R,
) -> Result<Vec<ModTriple>> {
    let pk = match &role {
        AheRole::KeyHolder(kp) => kp.public(),
        AheRole::Peer(pk) => pk,
    };
    if !ahe_mask_fits(modulus, lambda, pk) {
        return Err(Error::MaskOverflow);
    }
    if own.iter().any(|x| x >= modulus) {
        return Err(Error::PlaintextOutOfRange);
    }
    let n2 = pk.n_squared();
    match role {
        AheRole::KeyHolder(kp) => {
            let mut w = Writer::new();
            for a in own {
                w.residue(kp.encrypt(a, rng)?.value(), n2);
            }
            ep.send(w.finish())?;
            ep.flush_round()?;
            ep.flush_round()?;
            let msg = ep.recv()?;
            let mut r = Reader::new(&msg);
            let mut out = Vec::with_capacity(own.len());
            for a in own {
                let x = pk.ciphertext(r.residue(n2)?)?;
                let c = kp.decrypt_crt(&x)? % modulus;
                out.push(ModTriple { modulus: modulus.clone(), own: a.clone(), c });
            }
            r.finish()?;
            Ok(out)
        }
        AheRole::Peer(pk) => {
            ep.flush_round()?;
            let msg = ep.recv()?;
            let mut r = Reader::new(&msg);
            let mut w = Writer::new();
            let mut out = Vec::with_capacity(own.len());
            let span = BigUint::from(1u32) << lambda;
            for b in own {
                let x = pk.ciphertext(r.residue(n2)?)?;
                let mask = rng.gen_biguint_below(modulus);
                let rho = rng.gen_biguint_below(&span);
                let masked = pk.encrypt(&(&mask + rho * modulus), rng)?;
                let y = pk.add(&pk.scale(&x, b)?, &masked)?;
                w.residue(y.value(), n2);
                out.push(ModTriple { modulus: modulus.clone(), own: b.clone(), c: (modulus - mask) % modulus });
            }
            r.finish()?;
            ep.send(w.finish())?;
            ep.flush_round()?;
            Ok(out)
        }
    }
}

/// Fills both stores with `count` triples mod `modulus` (a-holder P0)
/// through [`gen_bmt_ot`]; the OTs must already be in the stores.
pub fn provision_bmts_ot<R: RngCore + ?Sized>(
    ep: &mut Endpoint,
    store: &mut CorrelationStore,
    modulus: &BigUint,
    count: usize,
    rng: &mut R,
) -> Result<()> {
    let own: Vec<BigUint> = (0..count).map(|_| rng.gen_biguint_below(modulus)).collect();
    for t in gen_bmt_ot(ep, store, modulus, &own, rng)? {
        store.push_mod_bmt(Party::P0, t);
    }
    Ok(())
}

/// As [`provision_bmts_ot`], through [`gen_bmt_ahe`].
pub fn provision_bmts_ahe<R: RngCore + ?Sized>(
    ep: &mut Endpoint,
    store: &mut CorrelationStore,
    role: AheRole<'_>,
    modulus: &BigUint,
    lambda: u32,
    count: usize,
    rng: &mut R,
) -> Result<()> {
    let own: Vec<BigUint> = (0..count).map(|_| rng.gen_biguint_below(modulus)).collect();
    for t in gen_bmt_ahe(ep, role, modulus, lambda, &own, rng)? {
        store.push_mod_bmt(Party::P0, t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{deal, Budget};
    use super::*;
    use crate::channel::run_two_party;
    use crate::sharing::Prng;
    use rand::{Rng, SeedableRng};

    fn check(t0: &[ModTriple], t1: &[ModTriple], n: &BigUint) {
        assert_eq!(t0.len(), t1.len());
        for (x, y) in t0.iter().zip(t1) {
            assert_eq!((&x.c + &y.c) % n, &x.own * &y.own % n);
        }
    }

    #[test]
    fn chosen_message_ot_1_of_8() {
        let kind = KOtKind { k: 8, width: 20, sender: Party::P1 };
        let [mut s0, mut s1] = deal(&Budget::default().k_ots(kind, 30), 3).unwrap();
        let mut rng = Prng::seed_from_u64(3);
        let msgs: Vec<Vec<Bits>> = (0..30).map(|_| (0..8).map(|_| Bits::random(20, &mut rng)).collect()).collect();
        let choices: Vec<u64> = (0..30).map(|_| rng.gen_range(0..8)).collect();
        let m2 = msgs.clone();
        let ch = choices.clone();
        let out = run_two_party(
            move |ep| ot_receive(ep, &mut s0, kind, &ch),
            move |ep| ot_respond(ep, &mut s1, kind, &m2),
        )
        .unwrap();
        for ((got, ms), &c) in out.p0.iter().zip(&msgs).zip(&choices) {
            assert_eq!(got, &ms[c as usize]);
        }
        assert_eq!(out.transcript.total_rounds(), 2);
        // receiver sends 30 one-byte corrections, sender 30 * 8 * 3 bytes
        let sizes = out.transcript.message_sizes(Party::P1);
        assert_eq!(sizes.iter().map(|s| s.1).sum::<u64>(), 30 * 8 * 3 + 4);
    }

    #[test]
    fn bmt_from_ot_exhaustive_a() {
        let n = BigUint::from(256u32);
        let kind = bmt_ot_kind(&n);
        let ell = bmt_ot_count(&n);
        assert_eq!(ell, 8);
        let count = 256u64;
        let [mut s0, mut s1] = deal(&Budget::default().k_ots(kind, count * ell), 4).unwrap();
        let a: Vec<BigUint> = (0..256u32).map(BigUint::from).collect();
        let mut rng = Prng::seed_from_u64(4);
        let mut b: Vec<BigUint> = (0..256).map(|_| rng.gen_biguint_below(&n)).collect();
        b[0] = BigUint::ZERO;
        let out = run_two_party(
            move |ep| {
                let t = gen_bmt_ot(ep, &mut s0, &n.clone(), &a, &mut Prng::seed_from_u64(1))?;
                Ok((t, s0.is_exhausted()))
            },
            move |ep| gen_bmt_ot(ep, &mut s1, &BigUint::from(256u32), &b, &mut Prng::seed_from_u64(2)),
        )
        .unwrap();
        check(&out.p0.0, &out.p1, &BigUint::from(256u32));
        assert!(out.p0.1, "exactly ell OTs per triple");
        assert_eq!(out.transcript.total_rounds(), 2);
    }

    #[test]
    fn bmt_from_ot_runs_out() {
        let n = BigUint::from(1000u32);
        let kind = bmt_ot_kind(&n);
        let [mut s0, mut s1] = deal(&Budget::default().k_ots(kind, 5), 5).unwrap();
        let out = run_two_party(
            move |ep| gen_bmt_ot(ep, &mut s0, &BigUint::from(1000u32), &[BigUint::from(3u32)], &mut Prng::seed_from_u64(1)),
            move |ep| gen_bmt_ot(ep, &mut s1, &BigUint::from(1000u32), &[BigUint::from(3u32)], &mut Prng::seed_from_u64(1)),
        );
        assert!(matches!(out, Err(Error::OtExhausted(_))));
    }

    #[test]
    fn bmt_from_ahe() {
        let mut rng = Prng::seed_from_u64(6);
        let kp = PaillierKeypair::generate(512, &mut rng).unwrap();
        let pk = kp.public().clone();
        let n = BigUint::from(1u32) << 16;
        let mut a: Vec<BigUint> = (0..100).map(|_| rng.gen_biguint_below(&n)).collect();
        a[0] = BigUint::ZERO;
        let b: Vec<BigUint> = (0..100).map(|_| rng.gen_biguint_below(&n)).collect();
        let n1 = n.clone();
        let out = run_two_party(
            move |ep| gen_bmt_ahe(ep, AheRole::KeyHolder(&kp), &n1, 40, &a, &mut Prng::seed_from_u64(1)),
            move |ep| gen_bmt_ahe(ep, AheRole::Peer(&pk), &(BigUint::from(1u32) << 16), 40, &b, &mut Prng::seed_from_u64(2)),
        )
        .unwrap();
        check(&out.p0, &out.p1, &n);
        assert_eq!(out.transcript.total_rounds(), 2);
    }

    #[test]
    fn ahe_mask_overflow() {
        let kp = PaillierKeypair::from_primes(BigUint::from(1_000_003u32), BigUint::from(1_000_033u32)).unwrap();
        let n = BigUint::from(1u32) << 16;
        assert!(!ahe_mask_fits(&n, 40, kp.public()));
        let out = run_two_party(
            move |ep| gen_bmt_ahe(ep, AheRole::KeyHolder(&kp), &n, 40, &[BigUint::from(1u32)], &mut Prng::seed_from_u64(1)),
            |_| Ok(Vec::<ModTriple>::new()),
        );
        assert!(matches!(out, Err(Error::MaskOverflow)));
    }
}
