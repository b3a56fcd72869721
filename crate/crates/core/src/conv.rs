//! Share conversions: boolean to arithmetic, arithmetic to boolean, and
//! additive to multiplicative over `Z_{N^2}`.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::RngCore;

use crate::bits::Bits;
use crate::channel::{Endpoint, Party};
use crate::dealer::{BitOt, CorrelationStore, ModTriple};
use crate::error::{Error, Result};
use crate::gmw::{adder_circuit, CircuitRun, TripleStream};
use crate::paillier::mod_inverse;
use crate::sharing::{ArithShare, MultShare, WordShare};
use crate::wire::{Reader, Writer};

/// A B2A whose single message is queued; the result is ready after the
/// next flush.
///
/// Per bit, P0 (OT sender, pads `p0, p1`) sends `x0_i - (p1 - p0)` and P1
/// (receiver, choice `c`) sends `x1_i ^ c`. Together these give additive
/// shares of `x0_i * x1_i`, and `x_i = x0_i + x1_i - 2 x0_i x1_i`.
pub struct B2aOpen {
    modulus: BigUint,
    own: Bits,
    ots: Vec<BitOt>,
    sent: Bits,
}

impl B2aOpen {
    pub fn send(ep: &mut Endpoint, store: &mut CorrelationStore, x: &WordShare, modulus: &BigUint) -> Result<B2aOpen> {
        let w = x.width();
        let ots = store.take_bit_ots(modulus, w)?;
        let own = x.bits().clone();
        let mut msg = Writer::new();
        let mut sent = Bits::zeros(0);
        match ep.party() {
            Party::P0 => {
                let mut fs = Vec::with_capacity(w);
                for (i, ot) in ots.iter().enumerate() {
                    let BitOt::Sender { p0, p1 } = ot else {
                        return Err(Error::ConfigInvalid("P0 holds a receiver bit OT".into()));
                    };
                    let delta = (modulus + p1 - p0) % modulus;
                    fs.push((modulus + own.get(i) as u32 - delta) % modulus);
                }
                write_residues(&mut msg, &fs, modulus);
            }
            Party::P1 => {
                sent = Bits::zeros(w);
                for (i, ot) in ots.iter().enumerate() {
                    let BitOt::Receiver { c, .. } = ot else {
                        return Err(Error::ConfigInvalid("P1 holds a sender bit OT".into()));
                    };
                    sent.set(i, own.get(i) ^ c);
                }
                msg.bits(&sent);
            }
        }
        ep.send(msg.finish())?;
        Ok(B2aOpen { modulus: modulus.clone(), own, ots, sent })
    }

    pub fn finish(self, ep: &mut Endpoint) -> Result<ArithShare> {
        let n = &self.modulus;
        let w = self.own.len();
        let msg = ep.recv()?;
        let mut r = Reader::new(&msg);
        let mut acc = BigUint::ZERO;
        let mut pow = BigUint::one();
        match ep.party() {
            Party::P0 => {
                let e = r.bits(w)?;
                for (i, ot) in self.ots.iter().enumerate() {
                    let BitOt::Sender { p0, .. } = ot else { unreachable!("checked in send") };
                    let u0 = (n - p0) % n;
                    let z = if e.get(i) { (n + self.own.get(i) as u32 - &u0) % n } else { u0 };
                    acc += &pow * term(self.own.get(i), &z, n);
                    pow <<= 1;
                }
            }
            Party::P1 => {
                let fs = read_residues(&mut r, w, n)?;
                for (i, (ot, f)) in self.ots.iter().zip(fs).enumerate() {
                    let BitOt::Receiver { c, pc } = ot else { unreachable!("checked in send") };
                    let cf = if *c { f } else { BigUint::ZERO };
                    let t = (cf + pc) % n;
                    let z = if self.sent.get(i) { (n - t) % n } else { t };
                    acc += &pow * term(self.own.get(i), &z, n);
                    pow <<= 1;
                }
            }
        }
        r.finish()?;
        Ok(ArithShare::new(acc, n.clone()))
    }
}

/// Residues travel as packed fields of `bits(modulus - 1)` bits each.
fn write_residues(msg: &mut Writer, xs: &[BigUint], modulus: &BigUint) {
    let k = residue_bits(modulus);
    let packed = Bits::concat(xs.iter().map(|x| Bits::from_biguint(x, k)).collect::<Vec<_>>().iter());
    msg.bits(&packed);
}

fn read_residues(r: &mut Reader, count: usize, modulus: &BigUint) -> Result<Vec<BigUint>> {
    let k = residue_bits(modulus);
    let packed = r.bits(count * k)?;
    (0..count)
        .map(|i| {
            let v = packed.slice(i * k, k).to_biguint();
            if &v >= modulus {
                return Err(Error::Malformed("residue not reduced".into()));
            }
            Ok(v)
        })
        .collect()
}

fn residue_bits(modulus: &BigUint) -> usize {
    (modulus - 1u32).bits() as usize
}

/// `x_i - 2 z_i mod n`.
fn term(x: bool, z: &BigUint, n: &BigUint) -> BigUint {
    let two_z = (z << 1u32) % n;
    (n + x as u32 - two_z) % n
}

/// Boolean shares of an unsigned word to additive shares mod `modulus`,
/// one flush, one bit OT per bit.
pub fn b2a(ep: &mut Endpoint, store: &mut CorrelationStore, x: &WordShare, modulus: &BigUint) -> Result<ArithShare> {
    let open = B2aOpen::send(ep, store, x, modulus)?;
    ep.flush_round()?;
    open.finish(ep)
}

/// `log2(modulus)` for a power of two.
pub fn power_of_two_width(modulus: &BigUint) -> Result<usize> {
    if modulus.count_ones() != 1 {
        return Err(Error::NonPowerOfTwoModulus);
    }
    Ok(modulus.bits() as usize - 1)
}

/// Additive shares mod `2^w` to boolean shares: both parties feed their
/// share into a shared adder. All shares run as SIMD lanes.
pub fn a2b_many(ep: &mut Endpoint, triples: &mut TripleStream, xs: &[ArithShare]) -> Result<Vec<WordShare>> {
    let Some(first) = xs.first() else { return Ok(Vec::new()) };
    let w = power_of_two_width(&first.modulus)?;
    if xs.iter().any(|x| x.modulus != first.modulus) {
        return Err(Error::ModulusMismatch);
    }
    if w == 0 {
        return Ok(vec![WordShare::zeros(0); xs.len()]);
    }
    let c = adder_circuit(&[w]);
    let zero = Bits::zeros(w);
    let lanes: Vec<Bits> = xs
        .iter()
        .map(|x| {
            let own = Bits::from_biguint(&x.value, w);
            match ep.party() {
                Party::P0 => Bits::concat([&own, &zero]),
                Party::P1 => Bits::concat([&zero, &own]),
            }
        })
        .collect();
    CircuitRun::new(&c, ep.party(), &lanes)?.run(ep, triples)
}

pub fn a2b(ep: &mut Endpoint, triples: &mut TripleStream, x: &ArithShare) -> Result<WordShare> {
    Ok(a2b_many(ep, triples, std::slice::from_ref(x))?.pop().expect("one lane"))
}

/// Rounds [`a2b`] takes at width `w`.
pub fn a2b_rounds(w: usize) -> usize {
    if w == 0 {
        0
    } else {
        adder_circuit(&[w]).and_depth()
    }
}

/// Uniform element of `Z*_{N^2}`: rejection-samples until coprime to `N`.
pub fn sample_gamma<R: RngCore + ?Sized>(n: &BigUint, n2: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let g = rng.gen_biguint_below(n2);
        if g.gcd(n).is_one() {
            return g;
        }
    }
}

/// Additive shares mod `N^2` to multiplicative ones, two flushes.
///
/// `S` (the triple's a-holder) ends with `gamma`, the other party with
/// `x * gamma^-1`.
pub fn add_to_mult<R: RngCore + ?Sized>(
    ep: &mut Endpoint,
    x: &ArithShare,
    triple: &ModTriple,
    a_holder: Party,
    n: &BigUint,
    rng: &mut R,
) -> Result<MultShare> {
    let gamma = (ep.party() == a_holder).then(|| sample_gamma(n, &x.modulus, rng));
    add_to_mult_inner(ep, x, triple, a_holder, gamma)
}

/// [`add_to_mult`] with the a-holder's `gamma` fixed; tests only need this.
pub fn add_to_mult_forced(
    ep: &mut Endpoint,
    x: &ArithShare,
    triple: &ModTriple,
    a_holder: Party,
    gamma: &BigUint,
) -> Result<MultShare> {
    let g = (ep.party() == a_holder).then(|| gamma.clone());
    add_to_mult_inner(ep, x, triple, a_holder, g)
}

fn add_to_mult_inner(
    ep: &mut Endpoint,
    x: &ArithShare,
    triple: &ModTriple,
    a_holder: Party,
    gamma: Option<BigUint>,
) -> Result<MultShare> {
    let m = &x.modulus;
    if &triple.modulus != m {
        return Err(Error::BmtInvalid);
    }
    if ep.party() == a_holder {
        let h = A2mHolder::new(triple.clone(), gamma.expect("a-holder has gamma"))?;
        ep.send(Writer::new().residue(&h.opening(), m).finish())?;
        ep.flush_round()?;
        let msg = ep.recv()?;
        let mut r = Reader::new(&msg);
        let f = r.residue(m)?;
        r.finish()?;
        ep.send(Writer::new().residue(&h.respond(&x.value, &f), m).finish())?;
        ep.flush_round()?;
        Ok(h.share())
    } else {
        let p = A2mPeer::new(triple.clone())?;
        ep.send(Writer::new().residue(&p.opening(&x.value), m).finish())?;
        ep.flush_round()?;
        let msg = ep.recv()?;
        let mut r = Reader::new(&msg);
        let e = r.residue(m)?;
        r.finish()?;
        ep.flush_round()?;
        let msg = ep.recv()?;
        let mut r = Reader::new(&msg);
        let w = r.residue(m)?;
        r.finish()?;
        Ok(p.finish(&x.value, &e, &w))
    }
}

fn check_triple(t: &ModTriple) -> Result<()> {
    if t.own >= t.modulus || t.c >= t.modulus {
        return Err(Error::BmtInvalid);
    }
    Ok(())
}

/// The a-holder's half of an additive-to-multiplicative conversion, for
/// callers that schedule the two messages themselves.
///
/// Its opening `e = gamma^-1 - a` does not depend on the input and may be
/// sent early. Its final share is `gamma` itself.
pub struct A2mHolder {
    triple: ModTriple,
    gamma: BigUint,
    ginv: BigUint,
}

impl A2mHolder {
    pub fn new(triple: ModTriple, gamma: BigUint) -> Result<Self> {
        check_triple(&triple)?;
        let ginv = mod_inverse(&gamma, &triple.modulus)
            .ok_or_else(|| Error::ConfigInvalid("gamma is not a unit".into()))?;
        Ok(A2mHolder { triple, gamma, ginv })
    }

    pub fn opening(&self) -> BigUint {
        let m = &self.triple.modulus;
        (m + &self.ginv - &self.triple.own) % m
    }

    /// `w = x gamma^-1 + a f + c` for the peer's opening `f`.
    pub fn respond(&self, x: &BigUint, f: &BigUint) -> BigUint {
        let t = &self.triple;
        (x * &self.ginv + &t.own * f + &t.c) % &t.modulus
    }

    pub fn share(&self) -> MultShare {
        MultShare { value: self.gamma.clone(), modulus: self.triple.modulus.clone() }
    }
}

/// The other half: opens `f = x - b`, then combines the holder's `e, w`.
pub struct A2mPeer {
    triple: ModTriple,
}

impl A2mPeer {
    pub fn new(triple: ModTriple) -> Result<Self> {
        check_triple(&triple)?;
        Ok(A2mPeer { triple })
    }

    pub fn opening(&self, x: &BigUint) -> BigUint {
        let m = &self.triple.modulus;
        (m + x % m - &self.triple.own) % m
    }

    pub fn finish(&self, x: &BigUint, e: &BigUint, w: &BigUint) -> MultShare {
        let t = &self.triple;
        let m = &t.modulus;
        let f = self.opening(x);
        let value = (w + e * &f + &t.own * e + &t.c) % m;
        MultShare { value, modulus: m.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::run_two_party;
    use crate::dealer::{deal, gen_special_bmt, Budget};
    use crate::sharing::{share_arith, share_boolean, Prng};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn run_b2a(xs: &[u64], w: usize, n: &BigUint, seed: u64) -> (Vec<BigUint>, crate::channel::Transcript) {
        let mut rng = Prng::seed_from_u64(seed);
        let (sh0, sh1): (Vec<_>, Vec<_>) = xs.iter().map(|&x| share_boolean(&Bits::from_u64(x, w), &mut rng)).unzip();
        let budget = Budget::default().bit_ots(n, (w * xs.len()) as u64);
        let [mut s0, mut s1] = deal(&budget, seed).unwrap();
        let (n0, n1) = (n.clone(), n.clone());
        let out = run_two_party(
            move |ep| {
                let opens = sh0.iter().map(|x| B2aOpen::send(ep, &mut s0, x, &n0)).collect::<Result<Vec<_>>>()?;
                ep.flush_round()?;
                opens.into_iter().map(|o| o.finish(ep)).collect::<Result<Vec<_>>>()
            },
            move |ep| {
                let opens = sh1.iter().map(|x| B2aOpen::send(ep, &mut s1, x, &n1)).collect::<Result<Vec<_>>>()?;
                ep.flush_round()?;
                opens.into_iter().map(|o| o.finish(ep)).collect::<Result<Vec<_>>>()
            },
        )
        .unwrap();
        let vals = out.p0.iter().zip(&out.p1).map(|(a, b)| a.reconstruct(b).unwrap()).collect();
        (vals, out.transcript)
    }

    #[test]
    fn b2a_examples() {
        let (v, t) = run_b2a(&[0, 13], 4, &BigUint::from(10u32), 1);
        assert_eq!(v, vec![BigUint::ZERO, BigUint::from(3u32)]);
        assert_eq!(t.total_rounds(), 1);
    }

    #[test]
    fn b2a_exhaustive_4_bit() {
        let xs: Vec<u64> = (0..16).collect();
        for n in [2u32, 10, 16, 23, 1000] {
            let (v, _) = run_b2a(&xs, 4, &BigUint::from(n), n as u64);
            for (x, got) in xs.iter().zip(v) {
                assert_eq!(got, BigUint::from(*x) % n);
            }
        }
    }

    #[test]
    fn b2a_random_against_bigint_oracle() {
        let mut rng = Prng::seed_from_u64(2);
        let kp = crate::paillier::PaillierKeypair::generate(512, &mut rng).unwrap();
        let n2 = kp.public().n_squared().clone();
        let moduli = [BigUint::from(23u32), BigUint::from(1u32) << 64, n2];
        for (k, n) in moduli.iter().enumerate() {
            let xs: Vec<u64> = (0..1000).map(|_| rng.gen()).collect();
            let (v, _) = run_b2a(&xs, 64, n, 10 + k as u64);
            for (x, got) in xs.iter().zip(v) {
                assert_eq!(got, BigUint::from(*x) % n);
            }
        }
    }

    #[test]
    fn b2a_runs_out_of_ots() {
        let n = BigUint::from(23u32);
        let [mut s0, mut s1] = deal(&Budget::default().bit_ots(&n, 3), 1).unwrap();
        let r = run_two_party(
            move |ep| b2a(ep, &mut s0, &WordShare::zeros(5), &BigUint::from(23u32)),
            move |ep| b2a(ep, &mut s1, &WordShare::zeros(5), &BigUint::from(23u32)),
        );
        assert!(matches!(r, Err(Error::OtExhausted(_))));
    }

    fn run_a2b(pairs: &[(u64, u64)], w: usize) -> (Vec<u64>, u64) {
        let n = BigUint::from(1u32) << w;
        let x0: Vec<ArithShare> = pairs.iter().map(|p| ArithShare::new(BigUint::from(p.0), n.clone())).collect();
        let x1: Vec<ArithShare> = pairs.iter().map(|p| ArithShare::new(BigUint::from(p.1), n.clone())).collect();
        let and = adder_circuit(&[w]).and_count() as u64 * pairs.len() as u64;
        let [mut s0, mut s1] = deal(&Budget::default().triples(and), 3).unwrap();
        let out = run_two_party(
            move |ep| a2b_many(ep, s0.triples(), &x0),
            move |ep| a2b_many(ep, s1.triples(), &x1),
        )
        .unwrap();
        let v = out.p0.iter().zip(&out.p1).map(|(a, b)| a.reconstruct(b).unwrap().to_u64()).collect();
        (v, out.transcript.total_rounds())
    }

    #[test]
    fn a2b_examples() {
        let (v, _) = run_a2b(&[(200, 100), (0, 0), (255, 1)], 8);
        assert_eq!(v, vec![44, 0, 0]);
    }

    #[test]
    fn a2b_round_bound() {
        for w in [4usize, 8, 16, 64] {
            let (_, rounds) = run_a2b(&[(1, 2)], w);
            let log = (w as f64).log2().ceil() as u64;
            assert!(rounds <= 2 * log + 1, "w={w}: {rounds}");
            assert_eq!(rounds as usize, a2b_rounds(w));
        }
    }

    #[test]
    fn a2b_rejects_non_power_of_two() {
        let x = ArithShare::new(BigUint::from(1u32), BigUint::from(10u32));
        let r = run_two_party(
            move |ep| a2b(ep, &mut TripleStream::default(), &x),
            |_| Ok(()),
        );
        assert_eq!(r.err(), Some(Error::NonPowerOfTwoModulus));
    }

    #[test]
    fn b2a_then_a2b_is_identity_16_bit() {
        let mut rng = Prng::seed_from_u64(4);
        let n = BigUint::from(1u32) << 16;
        let xs: Vec<u64> = (0..1000).map(|_| rng.gen_range(0..1 << 16)).collect();
        let (sh0, sh1): (Vec<_>, Vec<_>) = xs.iter().map(|&x| share_boolean(&Bits::from_u64(x, 16), &mut rng)).unzip();
        let and = adder_circuit(&[16]).and_count() as u64 * 1000;
        let budget = Budget::default().bit_ots(&n, 16 * 1000).triples(and);
        let [mut s0, mut s1] = deal(&budget, 4).unwrap();
        let (n0, n1) = (n.clone(), n.clone());
        let out = run_two_party(
            move |ep| {
                let a = sh0.iter().map(|x| b2a(ep, &mut s0, x, &n0)).collect::<Result<Vec<_>>>()?;
                a2b_many(ep, s0.triples(), &a)
            },
            move |ep| {
                let a = sh1.iter().map(|x| b2a(ep, &mut s1, x, &n1)).collect::<Result<Vec<_>>>()?;
                a2b_many(ep, s1.triples(), &a)
            },
        )
        .unwrap();
        for ((a, b), x) in out.p0.iter().zip(&out.p1).zip(&xs) {
            assert_eq!(a.reconstruct(b).unwrap().to_u64(), *x);
        }
    }

    fn toy_n() -> (BigUint, BigUint) {
        // 16-bit N from two 8-bit primes
        let n = BigUint::from(251u32 * 241);
        let n2 = &n * &n;
        (n, n2)
    }

    #[test]
    fn add_to_mult_identity_with_forced_gamma() {
        let (n, n2) = toy_n();
        let mut rng = Prng::seed_from_u64(5);
        let (x0, x1) = share_arith(&BigUint::one(), &n2, &mut rng);
        let (ta, tb) = gen_special_bmt(&n2, &mut rng);
        let out = run_two_party(
            move |ep| add_to_mult_forced(ep, &x0, &ta, Party::P0, &BigUint::one()),
            move |ep| add_to_mult_forced(ep, &x1, &tb, Party::P0, &BigUint::one()),
        )
        .unwrap();
        assert_eq!(out.p0.value, BigUint::one());
        assert_eq!(out.p1.value, BigUint::one());
        assert_eq!(out.transcript.total_rounds(), 2);
        let _ = n;
    }

    #[test]
    fn add_to_mult_random_instances() {
        let (n, n2) = toy_n();
        let mut rng = Prng::seed_from_u64(6);
        for i in 0..1000 {
            let x = rng.gen_biguint_below(&n2);
            let (x0, x1) = share_arith(&x, &n2, &mut rng);
            let (ta, tb) = gen_special_bmt(&n2, &mut rng);
            // alternate which party holds a
            let s = if i % 2 == 0 { Party::P0 } else { Party::P1 };
            let (t0, t1) = if s == Party::P0 { (ta, tb) } else { (tb, ta) };
            let (na, nb) = (n.clone(), n.clone());
            let out = run_two_party(
                move |ep| add_to_mult(ep, &x0, &t0, s, &na, &mut Prng::seed_from_u64(i)),
                move |ep| add_to_mult(ep, &x1, &t1, s, &nb, &mut Prng::seed_from_u64(i + 1)),
            )
            .unwrap();
            assert_eq!(out.p0.reconstruct(&out.p1).unwrap(), x);
            let gamma = if s == Party::P0 { &out.p0.value } else { &out.p1.value };
            assert!(gamma.gcd(&n).is_one());
        }
    }

    #[test]
    fn add_to_mult_rejects_bad_triple() {
        let (_, n2) = toy_n();
        let x = ArithShare::new(BigUint::one(), n2.clone());
        let t = ModTriple { modulus: BigUint::from(7u32), own: BigUint::one(), c: BigUint::one() };
        let r = run_two_party(
            move |ep| add_to_mult_forced(ep, &x, &t, Party::P0, &BigUint::one()),
            |_| Ok(()),
        );
        assert_eq!(r.err(), Some(Error::BmtInvalid));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cross_terms_recover_scaled_share(xr in any::<u64>(), ginv in 1u64.., seed in any::<u64>()) {
            // a*f + e*f + b*e + c = gamma^-1 * x_r with e = gamma^-1 - a, f = x_r - b
            let (_, n2) = toy_n();
            let mut rng = Prng::seed_from_u64(seed);
            let (ta, tb) = gen_special_bmt(&n2, &mut rng);
            let xr = BigUint::from(xr) % &n2;
            let ginv = BigUint::from(ginv) % &n2;
            let e = (&n2 + &ginv - &ta.own) % &n2;
            let f = (&n2 + &xr - &tb.own) % &n2;
            let lhs = (&ta.own * &f + &e * &f + &tb.own * &e + &ta.c + &tb.c) % &n2;
            prop_assert_eq!(lhs, &ginv * &xr % &n2);
        }
    }
}
